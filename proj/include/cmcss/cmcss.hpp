#pragma once

#include "cmcss/checkpoint.hpp"
#include "cmcss/cohort.hpp"
#include "cmcss/commands.hpp"
#include "cmcss/encoder.hpp"
#include "cmcss/error.hpp"
#include "cmcss/evaluation.hpp"
#include "cmcss/folds.hpp"
#include "cmcss/kernels.hpp"
#include "cmcss/losses.hpp"
#include "cmcss/matrix.hpp"
#include "cmcss/metrics.hpp"
#include "cmcss/modality.hpp"
#include "cmcss/run_config.hpp"
#include "cmcss/training.hpp"
