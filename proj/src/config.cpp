#include "ssdiff/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace ssdiff {

using nlohmann::json;

namespace {

void deep_merge(json& base, const json& patch) {
    if (!patch.is_object() || !base.is_object()) {
        base = patch;
        return;
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
            deep_merge(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

void check_known_keys(const json& obj, const std::string& prefix,
                      const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument(prefix + it.key() + ": unknown configuration key");
}

template <typename T>
void read_field(const json& obj, const std::string& prefix, const std::string& key, T& target) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<T>();
    } catch (const std::exception&) {
        throw std::invalid_argument(prefix + key + ": wrong value type");
    }
}

json default_json();

RunConfig from_json(const json& j) {
    RunConfig cfg;
    check_known_keys(j, "", {"data", "network", "schedule", "train", "sample", "metrics", "synth",
                             "seed"});
    read_field(j, "", "seed", cfg.seed);
    if (j.contains("data")) {
        const json& d = j.at("data");
        check_known_keys(d, "data.", {"path", "max_value", "sensor"});
        read_field(d, "data.", "path", cfg.data_path);
        read_field(d, "data.", "max_value", cfg.data_max_value);
        read_field(d, "data.", "sensor", cfg.sensor);
    }
    if (j.contains("network")) {
        const json& n = j.at("network");
        check_known_keys(n, "network.",
                         {"bands", "base_channels", "level_multipliers", "blocks_per_level",
                          "time_embed_dim", "norm_groups", "variant", "fmim"});
        read_field(n, "network.", "bands", cfg.network.bands);
        read_field(n, "network.", "base_channels", cfg.network.base_channels);
        read_field(n, "network.", "level_multipliers", cfg.network.level_multipliers);
        read_field(n, "network.", "blocks_per_level", cfg.network.blocks_per_level);
        read_field(n, "network.", "time_embed_dim", cfg.network.time_embed_dim);
        read_field(n, "network.", "norm_groups", cfg.network.norm_groups);
        read_field(n, "network.", "variant", cfg.network.variant);
        if (n.contains("fmim")) {
            const json& f = n.at("fmim");
            check_known_keys(f, "network.fmim.",
                             {"threshold_radius", "low_gain", "channel_scales"});
            read_field(f, "network.fmim.", "threshold_radius", cfg.network.fmim_threshold_radius);
            read_field(f, "network.fmim.", "low_gain", cfg.network.fmim_low_gain);
            if (f.contains("channel_scales")) {
                std::vector<double> s;
                read_field(f, "network.fmim.", "channel_scales", s);
                if (s.size() != 3)
                    throw std::invalid_argument(
                        "network.fmim.channel_scales: expects 3 constants");
                std::copy(s.begin(), s.end(), cfg.network.fmim_scales.scale_by_level.begin());
            }
        }
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        check_known_keys(s, "schedule.", {"T", "beta_start", "beta_end"});
        read_field(s, "schedule.", "T", cfg.schedule_T);
        read_field(s, "schedule.", "beta_start", cfg.beta_start);
        read_field(s, "schedule.", "beta_end", cfg.beta_end);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_known_keys(t, "train.",
                         {"lr", "finetune_lr", "batch_size", "total_iters", "finetune_iters",
                          "alternation_period", "ema_decay", "weight_decay", "grad_clip", "crop", "seed",
                          "checkpoint_every", "log_every"});
        read_field(t, "train.", "lr", cfg.train.lr);
        read_field(t, "train.", "finetune_lr", cfg.train.finetune_lr);
        read_field(t, "train.", "batch_size", cfg.train.batch_size);
        read_field(t, "train.", "total_iters", cfg.train.total_iters);
        read_field(t, "train.", "finetune_iters", cfg.train.finetune_iters);
        read_field(t, "train.", "alternation_period", cfg.train.alternation_period);
        read_field(t, "train.", "ema_decay", cfg.train.ema_decay);
        read_field(t, "train.", "weight_decay", cfg.train.weight_decay);
        read_field(t, "train.", "grad_clip", cfg.train.grad_clip);
        read_field(t, "train.", "crop", cfg.train.crop);
        cfg.train.seed = cfg.seed;
        read_field(t, "train.", "seed", cfg.train.seed);
        read_field(t, "train.", "checkpoint_every", cfg.checkpoint_every);
        read_field(t, "train.", "log_every", cfg.log_every);
    } else {
        cfg.train.seed = cfg.seed;
    }
    if (j.contains("sample")) {
        const json& s = j.at("sample");
        check_known_keys(s, "sample.", {"steps", "use_ema", "method"});
        read_field(s, "sample.", "steps", cfg.sample_steps);
        read_field(s, "sample.", "use_ema", cfg.sample_use_ema);
        read_field(s, "sample.", "method", cfg.sample_method);
    }
    if (j.contains("metrics")) {
        const json& m = j.at("metrics");
        check_known_keys(m, "metrics.", {"mode", "dlambda", "q2n_block", "ratio"});
        read_field(m, "metrics.", "mode", cfg.metrics_mode);
        read_field(m, "metrics.", "dlambda", cfg.dlambda_variant);
        read_field(m, "metrics.", "q2n_block", cfg.q2n_block);
        read_field(m, "metrics.", "ratio", cfg.ratio);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        check_known_keys(s, "synth.", {"scenes", "bands", "size"});
        read_field(s, "synth.", "scenes", cfg.synth_scenes);
        read_field(s, "synth.", "bands", cfg.synth_bands);
        read_field(s, "synth.", "size", cfg.synth_size);
    }
    return cfg;
}

json to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["data"] = {{"path", cfg.data_path},
                 {"max_value", cfg.data_max_value},
                 {"sensor", cfg.sensor}};
    j["network"] = {{"bands", cfg.network.bands},
                    {"base_channels", cfg.network.base_channels},
                    {"level_multipliers", cfg.network.level_multipliers},
                    {"blocks_per_level", cfg.network.blocks_per_level},
                    {"time_embed_dim", cfg.network.time_embed_dim},
                    {"norm_groups", cfg.network.norm_groups},
                    {"variant", cfg.network.variant},
                    {"fmim",
                     {{"threshold_radius", cfg.network.fmim_threshold_radius},
                      {"low_gain", cfg.network.fmim_low_gain},
                      {"channel_scales", cfg.network.fmim_scales.scale_by_level}}}};
    j["schedule"] = {{"T", cfg.schedule_T},
                     {"beta_start", cfg.beta_start},
                     {"beta_end", cfg.beta_end}};
    j["train"] = {{"lr", cfg.train.lr},
                  {"finetune_lr", cfg.train.finetune_lr},
                  {"batch_size", cfg.train.batch_size},
                  {"total_iters", cfg.train.total_iters},
                  {"finetune_iters", cfg.train.finetune_iters},
                  {"alternation_period", cfg.train.alternation_period},
                  {"ema_decay", cfg.train.ema_decay},
                  {"weight_decay", cfg.train.weight_decay},
                  {"grad_clip", cfg.train.grad_clip},
                  {"crop", cfg.train.crop},
                  {"seed", cfg.train.seed},
                  {"checkpoint_every", cfg.checkpoint_every},
                  {"log_every", cfg.log_every}};
    j["sample"] = {{"steps", cfg.sample_steps},
                   {"use_ema", cfg.sample_use_ema},
                   {"method", cfg.sample_method}};
    j["metrics"] = {{"mode", cfg.metrics_mode},
                    {"dlambda", cfg.dlambda_variant},
                    {"q2n_block", cfg.q2n_block},
                    {"ratio", cfg.ratio}};
    j["synth"] = {{"scenes", cfg.synth_scenes},
                  {"bands", cfg.synth_bands},
                  {"size", cfg.synth_size}};
    return j;
}

json default_json() { return to_json(RunConfig{}); }

}  // namespace

MtfProfile RunConfig::mtf_profile() const {
    if (sensor == "wv3") return MtfProfile::wv3();
    if (sensor == "qb") return MtfProfile::qb();
    if (sensor == "gf2") return MtfProfile::gf2();
    if (sensor == "generic") return MtfProfile::generic(network.bands);
    if (sensor == "uniform") return MtfProfile::uniform(network.bands);
    throw std::invalid_argument("data.sensor: unknown sensor '" + sensor + "'");
}

void RunConfig::validate() const {
    network.validate();
    train.validate();
    if (schedule_T < 2) throw std::invalid_argument("schedule.T: must be >= 2");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw std::invalid_argument("schedule.beta_start: need 0 < beta_start <= beta_end < 1");
    if (sample_steps < 1 || sample_steps > schedule_T)
        throw std::invalid_argument("sample.steps: must lie in [1, schedule.T]");
    if (sample_method != "ddim" && sample_method != "ddpm")
        throw std::invalid_argument("sample.method: must be 'ddim' or 'ddpm'");
    if (metrics_mode != "reduced" && metrics_mode != "full")
        throw std::invalid_argument("metrics.mode: must be 'reduced' or 'full'");
    if (dlambda_variant != "khan" && dlambda_variant != "qnr")
        throw std::invalid_argument("metrics.dlambda: must be 'khan' or 'qnr'");
    if (q2n_block < 2) throw std::invalid_argument("metrics.q2n_block: must be >= 2");
    if (ratio != 4) throw std::invalid_argument("metrics.ratio: only the factor-4 protocol is supported");
    if (synth_scenes < 1) throw std::invalid_argument("synth.scenes: must be >= 1");
    if (synth_bands != 4 && synth_bands != 8)
        throw std::invalid_argument("synth.bands: must be 4 or 8 (hypercomplex quality index)");
    if (synth_size < 8 || synth_size % 4 != 0)
        throw std::invalid_argument("synth.size: must be >= 8 and divisible by 4");
    if (!(data_max_value > 0.0))
        throw std::invalid_argument("data.max_value: must be positive");
    mtf_profile();  // validates sensor name
    if (static_cast<int>(mtf_profile().nyquist_gains.size()) != network.bands &&
        (sensor == "wv3" || sensor == "qb" || sensor == "gf2"))
        throw std::invalid_argument("data.sensor: band count does not match network.bands");
    if (checkpoint_every < 1) throw std::invalid_argument("train.checkpoint_every: must be >= 1");
    if (log_every < 1) throw std::invalid_argument("train.log_every: must be >= 1");
}

RunConfig load_run_config(const std::string& path) {
    json merged = default_json();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
        json file_json;
        try {
            in >> file_json;
        } catch (const std::exception& e) {
            throw std::invalid_argument("config: parse error in '" + path + "': " + e.what());
        }
        deep_merge(merged, file_json);
    }
    return from_json(merged);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override: expected key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    json patch;
    json* cursor = &patch;
    size_t start = 0;
    while (true) {
        size_t dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (part.empty()) throw std::invalid_argument("override: empty key component in '" + key + "'");
        if (dot == std::string::npos) {
            json v;
            try {
                v = json::parse(value);
            } catch (const std::exception&) {
                v = value;  // plain string
            }
            (*cursor)[part] = v;
            break;
        }
        (*cursor)[part] = json::object();
        cursor = &(*cursor)[part];
        start = dot + 1;
    }
    json merged = to_json(cfg);
    deep_merge(merged, patch);
    cfg = from_json(merged);
}

std::string run_config_json(const RunConfig& cfg) { return to_json(cfg).dump(2); }

std::string network_config_json(const NetworkConfig& cfg) {
    RunConfig rc;
    rc.network = cfg;
    return to_json(rc)["network"].dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
    json j;
    j["network"] = json::parse(text);
    return from_json(j).network;
}

std::string train_config_json(const TrainConfig& cfg) {
    RunConfig rc;
    rc.train = cfg;
    return to_json(rc)["train"].dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    j["train"] = json::parse(text);
    return from_json(j).train;
}

}  // namespace ssdiff
