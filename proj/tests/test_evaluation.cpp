#include <doctest.h>

#include <map>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cmcss;

TEST_CASE("metrics: perfect separation") {
    const MetricSet m = compute_metrics({1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1});
    CHECK(m.sen == 1.0);
    CHECK(m.spe == 1.0);
    CHECK(m.ba == 1.0);
    CHECK(m.auc == 1.0);
}

TEST_CASE("metrics: three of four pairs concordant") {
    const MetricSet m = compute_metrics({1, 0, 1, 0}, {0.9, 0.8, 0.4, 0.1});
    CHECK(m.sen == 0.5);
    CHECK(m.spe == 0.5);
    CHECK(m.ba == 0.5);
    CHECK(m.auc == 0.75);
}

TEST_CASE("metrics: ties and threshold") {
    CHECK(auc_mann_whitney({1, 0, 1, 0, 0}, {0.3, 0.3, 0.3, 0.3, 0.3}) == 0.5);
    const MetricSet m = compute_metrics({1, 0}, {0.5, 0.49});
    CHECK(m.sen == 1.0);
    CHECK(m.spe == 1.0);
}

TEST_CASE("AUC matches exhaustive pair counting") {
    std::mt19937_64 rng(1);
    for (std::size_t n = 2; n <= 50; ++n) {
        std::vector<int> y(n);
        std::vector<double> s(n);
        std::uniform_int_distribution<int> grid(0, 9);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = i % 2 == 0 ? 1 : (grid(rng) < 5);
            s[i] = grid(rng) / 10.0;  // coarse grid forces ties
        }
        y[1] = 0;
        CHECK(auc_mann_whitney(y, s) == oracle::auc_pairs(y, s));
    }
}

TEST_CASE("wilcoxon: identical samples") {
    const std::vector<double> a{0.1, 0.5, 0.3, 0.9, 0.2, 0.7};
    const WilcoxonResult r = wilcoxon_signed_rank(a, a);
    CHECK(r.p_value == 1.0);
    CHECK(r.all_zero);
}

TEST_CASE("wilcoxon: one-signed shift of ten pairs") {
    std::vector<double> a, b;
    for (int i = 0; i < 10; ++i) {
        b.push_back(0.05 * i * i);
        a.push_back(b.back() + 1.0);
    }
    const WilcoxonResult r = wilcoxon_signed_rank(a, b);
    CHECK(r.exact);
    CHECK(r.p_value == doctest::Approx(2.0 / 1024.0).epsilon(1e-12));
    CHECK(r.statistic == 55.0);
}

TEST_CASE("wilcoxon matches exhaustive sign enumeration") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> coarse(-4, 4);
    std::normal_distribution<double> fine;
    for (std::size_t n = 6; n <= 12; ++n)
        for (int t = 0; t < 8; ++t) {
            std::vector<double> a(n), b(n);
            for (std::size_t i = 0; i < n; ++i) {
                b[i] = fine(rng);
                // Half the trials use integer shifts so ties and zeros occur.
                a[i] = b[i] + (t % 2 == 0 ? coarse(rng) : fine(rng));
            }
            const double want = oracle::wilcoxon_enumerate(a, b);
            const WilcoxonResult got = wilcoxon_signed_rank(a, b);
            if (got.all_zero) continue;
            CHECK(std::fabs(got.p_value - want) <= 1e-12);
        }
}

TEST_CASE("wilcoxon: normal approximation for large n") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<double> a(40), b(40);
    for (std::size_t i = 0; i < 40; ++i) {
        b[i] = g(rng);
        a[i] = b[i] + 0.05 * g(rng);
    }
    const WilcoxonResult r = wilcoxon_signed_rank(a, b);
    CHECK_FALSE(r.exact);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
    CHECK(wilcoxon_signed_rank(b, a).p_value == doctest::Approx(r.p_value).epsilon(1e-12));
    CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3}, {0, 1, 2}), ContractError);
}

TEST_CASE("mean and sample SD") {
    CHECK(mean({1, 2, 3, 4}) == 2.5);
    CHECK(stddev({1, 2, 3, 4}) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(stddev({7}) == 0.0);
}

namespace {

HarnessConfig quick_harness(std::size_t k, std::size_t repeats, std::size_t pre, std::size_t fine) {
    HarnessConfig h;
    h.k = k;
    h.repeats = repeats;
    h.seed = 5;
    h.architecture = fixture::tiny_architecture();
    h.train.batch_size = 8;
    h.train.pretrain_epochs = pre;
    h.train.finetune_epochs = fine;
    h.train.learning_rate = 5e-3;
    return h;
}

nlohmann::ordered_json without_timestamp(nlohmann::ordered_json j) {
    j.erase("generated_at");
    return j;
}

}  // namespace

TEST_CASE("cross-validation accounting: k=5, 3 repeats") {
    const Cohort cohort = generate_synthetic_cohort(fixture::tiny_cohort(64, 2));
    const EvalReport r = cross_validate(cohort, quick_harness(5, 3, 1, 1));
    CHECK(r.folds.size() == 15);
    std::map<std::string, int> times;
    for (const auto& s : r.scores) ++times[s.subject_id];
    CHECK(times.size() == 64);
    for (const auto& [id, n] : times) CHECK(n == 3);
    const auto j = r.to_json();
    CHECK(j.contains("generated_at"));
    CHECK(j["summary"]["ba"]["sd"] == r.summary("ba").sd);
}

TEST_CASE("cross-validation accounting: k=10, 50 repeats") {
    const Cohort cohort = generate_synthetic_cohort(fixture::tiny_cohort(30, 3));
    HarnessConfig h = quick_harness(10, 50, 0, 1);
    h.contrastive_pretraining = false;
    const EvalReport r = cross_validate(cohort, h);
    CHECK(r.folds.size() == 500);
    CHECK(r.values("ba").size() == 500);
}

TEST_CASE("reports are reproducible and independent of the worker count") {
    const Cohort cohort = generate_synthetic_cohort(fixture::tiny_cohort(20, 4));
    HarnessConfig h = quick_harness(2, 2, 2, 2);
    const auto a = without_timestamp(cross_validate(cohort, h).to_json());
    h.max_workers = 3;
    const auto b = without_timestamp(cross_validate(cohort, h).to_json());
    CHECK(a.dump() == b.dump());
    CHECK(a.dump() == without_timestamp(cross_validate(cohort, quick_harness(2, 2, 2, 2)).to_json()).dump());
}

TEST_CASE("lambda ablation") {
    const Cohort cohort = generate_synthetic_cohort(fixture::tiny_cohort(16, 5));
    const HarnessConfig h = quick_harness(2, 1, 2, 1);
    const AblationTable t = ablate_lambda(cohort, kDefaultLambdaGrid, h);
    REQUIRE(t.rows.size() == 6);
    CHECK(t.rows.front().label == "0.00");
    CHECK(t.rows.back().label == "2.00");

    HarnessConfig css = h;
    css.train.objective = PretrainObjective::css_only;
    const EvalReport css_only = cross_validate(cohort, css);
    REQUIRE(css_only.folds.size() == t.rows[0].report.folds.size());
    for (std::size_t f = 0; f < css_only.folds.size(); ++f) {
        CHECK(css_only.folds[f].metrics.ba == t.rows[0].report.folds[f].metrics.ba);
        CHECK(css_only.folds[f].pretrain_final_loss == t.rows[0].report.folds[f].pretrain_final_loss);
    }
    std::istringstream csv(t.to_csv());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "lambda,ba_mean,ba_sd,auc_mean,auc_sd,sen_mean,sen_sd,spe_mean,spe_sd");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 6);
    CHECK_THROWS_AS(ablate_lambda(cohort, {-1.0}, h), ConfigError);
}

TEST_CASE("loss-component ablation") {
    const Cohort cohort = generate_synthetic_cohort(fixture::tiny_cohort(16, 6));
    HarnessConfig h = quick_harness(2, 1, 1, 1);
    h.train.lambda = 0.25;
    const AblationTable t = ablate_loss_components(cohort, h);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[2].label == "joint");
    CHECK(t.rows[2].report.config["train"]["lambda"] == 1.0);
    CHECK(t.rows[0].report.config["train"]["objective"] == "cmc_only");
}

TEST_CASE("modality ablations") {
    const Cohort cohort = generate_synthetic_cohort(fixture::tiny_cohort(16, 7));
    const HarnessConfig h = quick_harness(2, 1, 1, 1);
    const AblationTable drop = ablate_modality(cohort, ModalityAblation::drop_one, h);
    REQUIRE(drop.rows.size() == 6);
    CHECK(drop.rows[0].label == "all");
    CHECK(drop.rows[0].report.config["modalities"].size() == 5);
    for (std::size_t i = 1; i < 6; ++i) CHECK(drop.rows[i].report.config["modalities"].size() == 4);
    const AblationTable only = ablate_modality(cohort, ModalityAblation::only_one, h);
    REQUIRE(only.rows.size() == 5);
    for (const auto& row : only.rows) CHECK(row.report.config["modalities"].size() == 1);
    HarnessConfig cmc = h;
    cmc.train.objective = PretrainObjective::cmc_only;
    CHECK_THROWS_AS(ablate_modality(cohort, ModalityAblation::only_one, cmc), ContractError);
}

TEST_CASE("baseline report has the cross-validation schema") {
    const Cohort cohort = generate_synthetic_cohort(fixture::tiny_cohort(16, 8));
    const HarnessConfig h = quick_harness(2, 1, 1, 1);
    const auto a = cross_validate(cohort, h).to_json();
    const auto b = baseline_concat(cohort, h).to_json();
    std::vector<std::string> ka, kb;
    for (const auto& [k, v] : a.items()) ka.push_back(k);
    for (const auto& [k, v] : b.items()) kb.push_back(k);
    CHECK(ka == kb);
    CHECK(b["config"]["contrastive_pretraining"] == false);
}

TEST_CASE("embedding export") {
    const Cohort cohort = generate_synthetic_cohort(fixture::tiny_cohort(4, 9));
    const EncoderParams p = init_params(fixture::tiny_shape(), 1);
    std::istringstream csv(embeddings_csv(p, cohort));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "subject_id,modality,label,e0,e1,e2,e3");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 20);
}
