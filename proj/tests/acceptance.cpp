// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 1 2 9`.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cmcss;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::filesystem::path work_dir() {
    static const auto dir = [] {
        const auto p = std::filesystem::temp_directory_path() / "cmcss_acceptance";
        std::filesystem::remove_all(p);
        std::filesystem::create_directories(p);
        return p;
    }();
    return dir;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// Desk profile, easy synthetic cohort (n=64, snr=4, coupling=0.9).
RunConfig desk_config(const std::string& name, double snr, std::uint64_t seed) {
    json doc{{"profile", "desk"}, {"seed", seed}, {"cohort", {{"n_subjects", 64}, {"snr", snr}, {"cross_modality_coupling", 0.9}}}};
    doc["paths"] = {{"cohort_dir", (work_dir() / name / "cohort").string()},
                    {"output_dir", (work_dir() / name / "out").string()}};
    return parse_run_config(doc);
}

// ---- 1 -----------------------------------------------------------------------

Outcome loss_oracle() {
    std::mt19937_64 rng(20240501);
    const std::size_t sizes[] = {2, 3, 4, 8};
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        auto b = oracle::random_batch(rng, sizes[t % 4]);
        b.include_positive = t % 10 == 7;
        if (t % 10 == 3) b.active = {true, true, false, true, false};
        const BatchView v = oracle::to_view(b);
        const double lambda = 0.25 * (t % 9);
        worst = std::max({worst, std::fabs(cmc_loss(v) - oracle::cmc(b)), std::fabs(css_loss(v) - oracle::css(b)),
                          std::fabs(joint_loss(v, lambda).total - oracle::joint(b, lambda))});
    }
    return {worst <= 1e-10, fmt("max abs deviation %.3g over 100 batches (tol 1e-10)", worst)};
}

// ---- 2 -----------------------------------------------------------------------

Outcome closed_forms() {
    oracle::Batch ortho, aligned;
    std::size_t k = 0;
    for (int i = 0; i < 2; ++i) {
        oracle::Subject s, a;
        for (auto& v : s) {
            v.assign(16, 0.0);
            v[k++] = 1.0;
        }
        for (auto& v : a) {
            v.assign(8, 0.0);
            v[i] = 1.0;
        }
        ortho.subjects.push_back(s);
        aligned.subjects.push_back(a);
    }
    ortho.labels = {1, 1};
    aligned.labels = {0, 1};
    const double c0 = cmc_loss(oracle::to_view(ortho));
    const double s0 = css_loss(oracle::to_view(ortho));
    const double c1 = cmc_loss(oracle::to_view(aligned));
    const bool ok = std::fabs(c0) <= 1e-12 && std::fabs(s0) <= 1e-12 && std::fabs(c1 + 1.0) <= 1e-12;
    return {ok, fmt("orthogonal cmc %.3g css %.3g; aligned cmc %.15g (tol 1e-12)", c0, s0, c1)};
}

// ---- 3 -----------------------------------------------------------------------

double max_relative_error(const EncoderParams& params, const Cohort& cohort, const std::vector<std::size_t>& batch,
                          const Objective& objective, std::size_t& checked) {
    const GradientResult g = compute_gradients(params, cohort, batch, objective);
    EncoderParams probe = params;
    std::vector<Matrix*> mats;
    probe.for_each([&](const std::string&, Matrix& m) { mats.push_back(&m); });
    std::vector<const Matrix*> analytic;
    g.grads.for_each([&](const std::string&, const Matrix& m) { analytic.push_back(&m); });
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < mats.size(); ++k)
        for (std::size_t e = 0; e < mats[k]->size(); ++e) {
            double& x = mats[k]->data()[e];
            const double saved = x;
            x = saved + h;
            const double up = evaluate_objective(probe, cohort, batch, objective);
            x = saved - h;
            const double down = evaluate_objective(probe, cohort, batch, objective);
            x = saved;
            const double fd = (up - down) / (2 * h);
            const double an = analytic[k]->data()[e];
            // Relative error with a floor so entries whose true gradient is
            // zero (dead ReLUs) do not divide by round-off.
            worst = std::max(worst, std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-4}));
            ++checked;
        }
    return worst;
}

Outcome gradient_check() {
    CohortConfig cc;
    cc.n_subjects = 6;
    cc.dims = CohortDims{8, 10, 2, 8, 8, 4};
    cc.seed = 17;
    const Cohort cohort = generate_synthetic_cohort(cc);
    ModelShape shape;
    shape.dims = cc.dims;
    shape.reduce_width = 4;
    shape.hidden1 = 16;
    shape.hidden2 = 12;
    shape.feature_width = 12;
    shape.embed_dim = 8;
    shape.conv_channels = {2, 4, 4};
    const EncoderParams p = init_params(shape, 23);
    const std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5};
    std::size_t n_joint = 0, n_ce = 0;
    const double joint = max_relative_error(p, cohort, batch, Objective::joint(1.0), n_joint);
    const double ce = max_relative_error(p, cohort, batch, Objective::weighted_ce(inverse_frequency_weights(cohort.labels())), n_ce);
    return {joint <= 1e-4 && ce <= 1e-4,
            fmt("joint %.3g, weighted CE %.3g over %.0f parameters each (tol 1e-4)", joint, ce,
                static_cast<double>(n_joint))};
}

// ---- 4 -----------------------------------------------------------------------

Outcome embedding_invariants() {
    double worst_norm = 0.0, worst_row = 0.0;
    std::size_t passes = 0;
    for (std::uint64_t s = 0; passes < 1000; ++s) {
        CohortConfig cc;
        cc.n_subjects = 10;
        cc.dims = CohortDims{16, 20, 10, 16, 16, 16};
        cc.snr = static_cast<double>(s % 5);
        cc.cross_modality_coupling = 0.1 * static_cast<double>(s % 11);
        cc.seed = 1000 + s;
        const Cohort cohort = generate_synthetic_cohort(cc);
        ArchitectureConfig arch;
        const EncoderParams p = init_params(arch.shape_for(cc.dims, ModalitySet::all()), 5000 + s);
        for (const auto& rec : cohort.subjects) {
            const SubjectTape tape = forward_subject(rec, p);
            for (const auto& v : tape.embeddings.vectors)
                worst_norm = std::max(worst_norm, std::fabs(std::sqrt(oracle::inner(v, v)) - 1.0));
            for (int b = 0; b < 3; ++b) {
                const Matrix& a = tape.branches[b].attention;
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    double sum = 0.0;
                    for (double x : a.row(r)) sum += x;
                    worst_row = std::max(worst_row, std::fabs(sum - 1.0));
                }
            }
            ++passes;
        }
    }
    return {worst_norm <= 1e-6 && worst_row <= 1e-9,
            fmt("%.0f passes: max |norm-1| %.3g (tol 1e-6), max |row sum-1| %.3g (tol 1e-9)",
                static_cast<double>(passes), worst_norm, worst_row)};
}

// ---- 5 and 10 (pretraining) --------------------------------------------------

struct PretrainRuns {
    bool done = false;
    std::string log_a, log_b, ckpt_a, ckpt_b;
    RunConfig config;
};

PretrainRuns& pretrain_runs() {
    static PretrainRuns runs;
    if (runs.done) return runs;
    runs.config = desk_config("pretrain", 4.0, 1);
    cmd_gen_data(runs.config);
    cmd_pretrain(runs.config);
    const auto out = runs.config.output_dir;
    runs.log_a = read_file(out / "pretrain_log.jsonl");
    runs.ckpt_a = read_file(out / "pretrained.json");
    cmd_pretrain(runs.config);
    runs.log_b = read_file(out / "pretrain_log.jsonl");
    runs.ckpt_b = read_file(out / "pretrained.json");
    runs.done = true;
    return runs;
}

Outcome alignment() {
    PretrainRuns& runs = pretrain_runs();
    const Cohort cohort = load_cohort(runs.config.cohort_dir / "manifest.json");
    const EncoderParams p = checkpoint_from_string(runs.ckpt_a);
    std::vector<std::size_t> all(cohort.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto emb = encode_batch(cohort, all, p);
    double same = 0.0, cross = 0.0;
    std::size_t n_same = 0, n_cross = 0;
    for (std::size_t i = 0; i < emb.size(); ++i)
        for (std::size_t j = 0; j < emb.size(); ++j)
            for (int u = 0; u < 5; ++u)
                for (int v = 0; v < 5; ++v) {
                    if (u == v) continue;
                    const double c = oracle::inner(emb[i].vectors[u], emb[j].vectors[v]);
                    if (i == j) {
                        same += c;
                        ++n_same;
                    } else {
                        cross += c;
                        ++n_cross;
                    }
                }
    same /= static_cast<double>(n_same);
    cross /= static_cast<double>(n_cross);
    return {same - cross >= 0.1,
            fmt("same-subject cosine %.4f, cross-subject %.4f, gap %.4f (need >= 0.1)", same, cross, same - cross)};
}

// ---- 6, 7 and 10 (cross-validation) ------------------------------------------

std::string strip_timestamp(const std::string& report) {
    json j = json::parse(report);
    j.erase("generated_at");
    return j.dump();
}

struct EvaluateRuns {
    bool done = false;
    std::string report_a, report_b;
};

EvaluateRuns& easy_runs() {
    static EvaluateRuns runs;
    if (runs.done) return runs;
    const RunConfig c = desk_config("easy", 4.0, 2);
    cmd_gen_data(c);
    cmd_evaluate(c);
    runs.report_a = read_file(c.output_dir / "report.json");
    cmd_evaluate(c);
    runs.report_b = read_file(c.output_dir / "report.json");
    runs.done = true;
    return runs;
}

Outcome learnability() {
    const json r = json::parse(easy_runs().report_a);
    const double ba = r["summary"]["ba"]["mean"];
    const double sd = r["summary"]["ba"]["sd"];
    return {ba >= 0.85, fmt("k=5 x 3 repeats: mean BA %.4f (SD %.4f, %.0f folds), need >= 0.85", ba, sd,
                            static_cast<double>(r["folds"].size()))};
}

Outcome chance_level() {
    const RunConfig c = desk_config("chance", 0.0, 3);
    cmd_gen_data(c);
    cmd_evaluate(c);
    const json r = json::parse(read_file(c.output_dir / "report.json"));
    const double ba = r["summary"]["ba"]["mean"];
    return {std::fabs(ba - 0.5) <= 0.1, fmt("snr=0: mean BA %.4f (SD %.4f), need within 0.1 of 0.5", ba,
                                            r["summary"]["ba"]["sd"].get<double>())};
}

// ---- 8 -----------------------------------------------------------------------

Outcome ablation_trend() {
    const std::size_t seeds = 10;
    double joint = 0.0, css = 0.0, cmc = 0.0;
    std::string per_seed;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        RunConfig c = desk_config("trend", 2.0, 100 + s);
        c.repeats = 1;
        const Cohort cohort = generate_synthetic_cohort(c.cohort);
        HarnessConfig h = c.harness();
        // Joint is lambda = 1; lambda = 0 is the css-only objective.
        const AblationTable t = ablate_loss_components(cohort, h);
        const double bc = t.rows[0].report.summary("ba").mean;
        const double bs = t.rows[1].report.summary("ba").mean;
        const double bj = t.rows[2].report.summary("ba").mean;
        cmc += bc / seeds;
        css += bs / seeds;
        joint += bj / seeds;
        per_seed += fmt(" [%.3f %.3f %.3f]", bj, bs, bc);
    }
    std::printf("  criterion 8 per seed [joint css_only cmc_only]:%s\n", per_seed.c_str());
    const bool ok = joint >= css && joint >= cmc;
    return {ok, fmt("mean BA joint(lambda=1) %.4f, lambda=0 (css only) %.4f, cmc only %.4f over 10 seeds", joint,
                    css, cmc)};
}

// ---- 9 -----------------------------------------------------------------------

Outcome metrics_correctness() {
    bool ok = true;
    const MetricSet a = compute_metrics({1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1});
    ok &= a.sen == 1.0 && a.spe == 1.0 && a.ba == 1.0 && a.auc == 1.0;
    const MetricSet b = compute_metrics({1, 0, 1, 0}, {0.9, 0.8, 0.4, 0.1});
    ok &= b.sen == 0.5 && b.spe == 0.5 && b.ba == 0.5 && b.auc == 0.75;
    ok &= auc_mann_whitney({1, 0, 0, 1}, {0.2, 0.2, 0.2, 0.2}) == 0.5;

    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> grid(0, 12);
    std::size_t auc_cases = 0;
    for (std::size_t n = 2; n <= 50; ++n)
        for (int t = 0; t < 5; ++t) {
            std::vector<int> y(n);
            std::vector<double> s(n);
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = grid(rng) % 2;
                s[i] = grid(rng) / 12.0;
            }
            y[0] = 1;
            y[1] = 0;
            ok &= auc_mann_whitney(y, s) == oracle::auc_pairs(y, s);
            ++auc_cases;
        }

    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> step(-3, 3);
    double worst = 0.0;
    std::size_t w_cases = 0;
    for (std::size_t n = 6; n <= 12; ++n)
        for (int t = 0; t < 10; ++t) {
            std::vector<double> x(n), y(n);
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = g(rng);
                x[i] = y[i] + (t % 2 ? g(rng) : step(rng));
            }
            const WilcoxonResult r = wilcoxon_signed_rank(x, y);
            worst = std::max(worst, std::fabs(r.p_value - oracle::wilcoxon_enumerate(x, y)));
            ++w_cases;
        }
    ok &= worst <= 1e-12;
    return {ok, fmt("hand examples exact; AUC == pair count on %.0f cases; Wilcoxon max |dp| %.3g on %.0f cases",
                    static_cast<double>(auc_cases), worst, static_cast<double>(w_cases))};
}

// ---- 10 ----------------------------------------------------------------------

Outcome determinism() {
    PretrainRuns& pre = pretrain_runs();
    EvaluateRuns& ev = easy_runs();
    const bool logs = !pre.log_a.empty() && pre.log_a == pre.log_b && pre.ckpt_a == pre.ckpt_b;
    const bool reports = strip_timestamp(ev.report_a) == strip_timestamp(ev.report_b);
    return {logs && reports, std::string("pretrain logs and checkpoints ") + (logs ? "identical" : "DIFFER") +
                                 "; report JSON without timestamp " + (reports ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"loss oracle equivalence", loss_oracle},
        {"closed-form spot values", closed_forms},
        {"gradient check", gradient_check},
        {"embedding invariants", embedding_invariants},
        {"alignment property", alignment},
        {"learnability", learnability},
        {"chance-level control", chance_level},
        {"ablation trend", ablation_trend},
        {"metrics correctness", metrics_correctness},
        {"determinism", determinism},
    };

    int failures = 0;
    for (int k = 0; k < 10; ++k) {
        if (!only.empty() && !only.count(k + 1)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
