#include "cmcss/run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "cmcss/error.hpp"

namespace cmcss {

using nlohmann::json;
using nlohmann::ordered_json;

void apply_profile(RunConfig& c, const std::string& profile) {
    if (profile == "desk") {
        c.train.pretrain_epochs = 200;
        c.train.finetune_epochs = 100;
        c.k = 5;
        c.repeats = 3;
        c.cohort.dims = CohortDims{16, 20, 10, 16, 16, 16};
    } else if (profile == "paper") {
        c.train.pretrain_epochs = 2000;
        c.train.finetune_epochs = 500;
        c.k = 10;
        c.repeats = 50;
        c.cohort.dims = CohortDims{87, 100, 10, 32, 32, 16};
    } else {
        throw ConfigIssues({"profile: must be \"desk\" or \"paper\", got \"" + profile + "\""});
    }
    c.profile = profile;
}

namespace {

class Reader {
public:
    explicit Reader(std::vector<std::string>& issues) : issues_(issues) {}

    // Visits every key of `obj`, dispatching to `handlers`; unknown keys and
    // handler failures are recorded as issues.
    void section(const json& obj, const std::string& prefix,
                 const std::map<std::string, std::function<void(const json&, const std::string&)>>& handlers) {
        if (!obj.is_object()) {
            issues_.push_back((prefix.empty() ? std::string("config") : prefix) + ": must be an object");
            return;
        }
        for (const auto& [key, value] : obj.items()) {
            const std::string path = prefix.empty() ? key : prefix + "." + key;
            auto it = handlers.find(key);
            if (it == handlers.end()) {
                issues_.push_back(path + ": unknown key");
                continue;
            }
            try {
                it->second(value, path);
            } catch (const json::exception&) {
                issues_.push_back(path + ": wrong type");
            }
        }
    }

    void check(bool ok, const std::string& path, const std::string& what) {
        if (!ok) issues_.push_back(path + ": " + what);
    }

    std::size_t count(const json& v, const std::string& path, std::size_t minimum) {
        if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(minimum)) {
            issues_.push_back(path + ": must be an integer >= " + std::to_string(minimum));
            return minimum;
        }
        return v.get<std::size_t>();
    }

    double real(const json& v, const std::string& path) {
        if (!v.is_number()) {
            issues_.push_back(path + ": must be a number");
            return 0.0;
        }
        return v.get<double>();
    }

private:
    std::vector<std::string>& issues_;
};

}  // namespace

RunConfig parse_run_config(const json& doc, const std::optional<std::string>& profile_override,
                           const std::optional<std::uint64_t>& seed_override) {
    std::vector<std::string> issues;
    RunConfig c;
    std::string profile = "desk";
    if (doc.is_object() && doc.contains("profile") && doc["profile"].is_string()) profile = doc["profile"];
    if (profile_override) profile = *profile_override;
    try {
        apply_profile(c, profile);
    } catch (const ConfigIssues& e) {
        issues.insert(issues.end(), e.issues().begin(), e.issues().end());
    }

    Reader r(issues);
    std::optional<std::uint64_t> cohort_seed;
    using Handlers = std::map<std::string, std::function<void(const json&, const std::string&)>>;

    const Handlers cohort_keys = {
        {"n_subjects", [&](const json& v, const std::string& p) { c.cohort.n_subjects = r.count(v, p, 4); }},
        {"d", [&](const json& v, const std::string& p) { c.cohort.dims.d = r.count(v, p, 2); }},
        {"z", [&](const json& v, const std::string& p) { c.cohort.dims.z = r.count(v, p, 1); }},
        {"n_slices", [&](const json& v, const std::string& p) { c.cohort.dims.n_slices = r.count(v, p, 1); }},
        {"h", [&](const json& v, const std::string& p) { c.cohort.dims.h = r.count(v, p, 1); }},
        {"w", [&](const json& v, const std::string& p) { c.cohort.dims.w = r.count(v, p, 1); }},
        {"c_dim", [&](const json& v, const std::string& p) { c.cohort.dims.c_dim = r.count(v, p, 1); }},
        {"latent_dim", [&](const json& v, const std::string& p) { c.cohort.latent_dim = r.count(v, p, 1); }},
        {"class_balance", [&](const json& v, const std::string& p) {
             c.cohort.class_balance = r.real(v, p);
             r.check(c.cohort.class_balance > 0.0 && c.cohort.class_balance < 1.0, p, "must lie in (0, 1)");
         }},
        {"snr", [&](const json& v, const std::string& p) {
             c.cohort.snr = r.real(v, p);
             r.check(c.cohort.snr >= 0.0, p, "must be >= 0");
         }},
        {"cross_modality_coupling", [&](const json& v, const std::string& p) {
             c.cohort.cross_modality_coupling = r.real(v, p);
             r.check(c.cohort.cross_modality_coupling >= 0.0 && c.cohort.cross_modality_coupling <= 1.0, p,
                     "must lie in [0, 1]");
         }},
        {"seed", [&](const json& v, const std::string& p) { cohort_seed = r.count(v, p, 0); }},
    };

    const Handlers train_keys = {
        {"batch_size", [&](const json& v, const std::string& p) { c.train.batch_size = r.count(v, p, 2); }},
        {"pretrain_epochs", [&](const json& v, const std::string& p) { c.train.pretrain_epochs = r.count(v, p, 0); }},
        {"finetune_epochs", [&](const json& v, const std::string& p) { c.train.finetune_epochs = r.count(v, p, 0); }},
        {"learning_rate", [&](const json& v, const std::string& p) {
             c.train.learning_rate = r.real(v, p);
             r.check(c.train.learning_rate >= 0.0, p, "must be >= 0");
         }},
        {"weight_decay", [&](const json& v, const std::string& p) {
             c.train.weight_decay = r.real(v, p);
             r.check(c.train.weight_decay >= 0.0, p, "must be >= 0");
         }},
        {"lambda", [&](const json& v, const std::string& p) {
             c.train.lambda = r.real(v, p);
             r.check(c.train.lambda >= 0.0, p, "must be >= 0");
         }},
        {"temperature", [&](const json& v, const std::string& p) {
             c.train.temperature = r.real(v, p);
             r.check(c.train.temperature > 0.0, p, "must be > 0");
         }},
        {"objective", [&](const json& v, const std::string& p) {
             try {
                 c.train.objective = objective_from_name(v.get<std::string>());
             } catch (const ConfigError&) {
                 r.check(false, p, "must be one of joint, cmc_only, css_only");
             }
         }},
        {"denominator_includes_positive",
         [&](const json& v, const std::string&) { c.train.denominator_includes_positive = v.get<bool>(); }},
    };

    const Handlers arch_keys = {
        {"reduce_width", [&](const json& v, const std::string& p) { c.architecture.reduce_width = r.count(v, p, 1); }},
        {"hidden1", [&](const json& v, const std::string& p) { c.architecture.hidden1 = r.count(v, p, 1); }},
        {"hidden2", [&](const json& v, const std::string& p) { c.architecture.hidden2 = r.count(v, p, 1); }},
        {"feature_width", [&](const json& v, const std::string& p) { c.architecture.feature_width = r.count(v, p, 1); }},
        {"embed_dim", [&](const json& v, const std::string& p) { c.architecture.embed_dim = r.count(v, p, 1); }},
        {"conv_channels", [&](const json& v, const std::string& p) {
             const auto ch = v.get<std::vector<std::size_t>>();
             r.check(ch.size() == 3, p, "must list 3 channel counts");
             if (ch.size() == 3) c.architecture.conv_channels = {ch[0], ch[1], ch[2]};
         }},
    };

    const Handlers harness_keys = {
        {"k", [&](const json& v, const std::string& p) { c.k = r.count(v, p, 2); }},
        {"repeats", [&](const json& v, const std::string& p) { c.repeats = r.count(v, p, 1); }},
        {"inner_val_fraction", [&](const json& v, const std::string& p) {
             c.inner_val_fraction = r.real(v, p);
             r.check(c.inner_val_fraction > 0.0 && c.inner_val_fraction < 1.0, p, "must lie in (0, 1)");
         }},
        {"lambda_grid", [&](const json& v, const std::string& p) {
             c.lambda_grid = v.get<std::vector<double>>();
             r.check(!c.lambda_grid.empty(), p, "must not be empty");
             for (double l : c.lambda_grid) r.check(l >= 0.0, p, "values must be >= 0");
         }},
        {"max_workers", [&](const json& v, const std::string& p) { c.max_workers = r.count(v, p, 1); }},
        {"modalities", [&](const json& v, const std::string& p) {
             c.modalities = ModalitySet();
             for (const auto& name : v.get<std::vector<std::string>>()) {
                 try {
                     c.modalities.insert(modality_from_name(name));
                 } catch (const ConfigError&) {
                     r.check(false, p, "unknown modality \"" + name + "\"");
                 }
             }
             r.check(c.modalities.count() >= 1, p, "must name at least one modality");
         }},
    };

    const Handlers path_keys = {
        {"cohort_dir", [&](const json& v, const std::string&) { c.cohort_dir = v.get<std::string>(); }},
        {"output_dir", [&](const json& v, const std::string&) { c.output_dir = v.get<std::string>(); }},
        {"checkpoint", [&](const json& v, const std::string&) { c.checkpoint = v.get<std::string>(); }},
    };

    const Handlers top = {
        {"profile", [&](const json& v, const std::string& p) { r.check(v.is_string(), p, "must be a string"); }},
        {"seed", [&](const json& v, const std::string& p) { c.seed = r.count(v, p, 0); }},
        {"cohort", [&](const json& v, const std::string& p) { r.section(v, p, cohort_keys); }},
        {"train", [&](const json& v, const std::string& p) { r.section(v, p, train_keys); }},
        {"architecture", [&](const json& v, const std::string& p) { r.section(v, p, arch_keys); }},
        {"harness", [&](const json& v, const std::string& p) { r.section(v, p, harness_keys); }},
        {"paths", [&](const json& v, const std::string& p) { r.section(v, p, path_keys); }},
    };
    r.section(doc, "", top);

    if (seed_override) c.seed = *seed_override;
    c.cohort.seed = cohort_seed.value_or(c.seed);
    c.train.seed = c.seed;
    if (issues.empty()) {
        try {
            validate(c.cohort);
        } catch (const ConfigError& e) {
            issues.push_back(std::string("cohort: ") + e.what());
        }
    }
    if (!issues.empty()) throw ConfigIssues(std::move(issues));
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::optional<std::string>& profile_override,
                          const std::optional<std::uint64_t>& seed_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc, profile_override, seed_override);
}

HarnessConfig RunConfig::harness(const std::string& method) const {
    HarnessConfig h;
    h.method = method;
    h.k = k;
    h.repeats = repeats;
    h.inner_val_fraction = inner_val_fraction;
    h.seed = seed;
    h.train = train;
    h.architecture = architecture;
    h.modalities = modalities;
    h.max_workers = max_workers;
    return h;
}

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["profile"] = profile;
    j["seed"] = seed;
    j["cohort"] = {{"n_subjects", cohort.n_subjects},
                   {"d", cohort.dims.d},
                   {"z", cohort.dims.z},
                   {"n_slices", cohort.dims.n_slices},
                   {"h", cohort.dims.h},
                   {"w", cohort.dims.w},
                   {"c_dim", cohort.dims.c_dim},
                   {"latent_dim", cohort.latent_dim},
                   {"class_balance", cohort.class_balance},
                   {"snr", cohort.snr},
                   {"cross_modality_coupling", cohort.cross_modality_coupling},
                   {"seed", cohort.seed}};
    const ordered_json h = cmcss::to_json(harness());
    j["train"] = h["train"];
    j["architecture"] = h["architecture"];
    j["harness"] = {{"k", k},
                    {"repeats", repeats},
                    {"inner_val_fraction", inner_val_fraction},
                    {"lambda_grid", lambda_grid},
                    {"max_workers", max_workers},
                    {"modalities", modalities.names()}};
    j["paths"] = {{"cohort_dir", cohort_dir.string()}, {"output_dir", output_dir.string()}};
    if (checkpoint) j["paths"]["checkpoint"] = checkpoint->string();
    return j;
}

}  // namespace cmcss
