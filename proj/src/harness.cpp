// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <sstream>
#include <thread>

#include "loradrop/io_util.hpp"

namespace loradrop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& section) {
    require(j.is_object(), ErrorCode::kConfig, "config: '" + section + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        require(ok, ErrorCode::kConfig, "config: unknown key '" + section + (section.empty() ? "" : ".") + key + "'");
    }
}

json section(const json& j, const char* name) { return j.contains(name) ? j.at(name) : json::object(); }

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    return rng.next_u64();
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string join_indices(const std::set<std::size_t>& s) {
    std::string out;
    for (std::size_t v : s) out += (out.empty() ? "" : ",") + std::to_string(v);
    return out.empty() ? "(none)" : out;
}

// Lazily built state shared by the pipeline stages of one command.
class Workspace {
public:
    explicit Workspace(const RunConfig& c) : config_(c), model_(make_model(c)) {}

    const RunConfig& config() const { return config_; }
    Model& model() { return model_; }

    const Corpus& corpus() {
        if (!corpus_) {
            if (config_.corpus_path) {
                corpus_ = parse_corpus(read_file(*config_.corpus_path));
                corpus_id_ = config_.corpus_path->filename().string();
            } else {
                corpus_ = synthetic_corpus(config_.corpus_sequences, config_.corpus_length, model_.spec().vocab_size,
                                           config_.corpus_repeat_prob, mix_seed(config_.seed, 1));
                corpus_id_ = "synthetic";
            }
        }
        return *corpus_;
    }

    const TraceSet& traces() {
        if (!traces_) {
            const Corpus& c = corpus();
            traces_ = collect_traces(model_, c, corpus_id_, config_.threads);
        }
        return *traces_;
    }

    const RedundancyProfile& profile() {
        if (!profile_) profile_ = measure_similarity(traces(), config_.delta_max, config_.score_deltas);
        return *profile_;
    }

    std::set<std::size_t> drop_set() {
        if (config_.drop_layers) return *config_.drop_layers;
        if (config_.p)
            return build_drop_list(profile(), *config_.p, config_.protected_prefix, config_.protected_suffix);
        if (config_.drop_list_path) return parse_drop_list(read_file(*config_.drop_list_path));
        fail(ErrorCode::kConfig, "config: schedule needs one of p, drop_layers, or drop_list_path");
    }

    Schedule schedule(std::set<std::size_t> drop) const {
        Schedule s;
        s.drop_set = std::move(drop);
        s.k = config_.k;
        s.protected_prefix = config_.protected_prefix;
        s.protected_suffix = config_.protected_suffix;
        s.validate(model_.spec().n_layers);
        return s;
    }

    std::size_t rank() const {
        return config_.calibration_rank ? config_.calibration_rank : model_.spec().lora_rank;
    }

    // Installs adapters for `layers`: from a file, by calibration, or left as
    // the zero-initialized reuse adapters.
    std::map<std::size_t, CalibrationResult> install_adapters(const std::set<std::size_t>& layers) {
        std::map<std::size_t, CalibrationResult> calibrated;
        if (config_.adapters_path) {
            for (auto& [layer, a] : load_adapters(*config_.adapters_path)) model_.set_adapter(layer, std::move(a));
            return calibrated;
        }
        if (!config_.calibrate || layers.empty()) return calibrated;
        const TraceSet& tr = traces();
        for (std::size_t layer : layers) {
            CalibrationResult r = calibrate_lora(tr, model_, layer, rank(), config_.calibration_lambda);
            model_.set_adapter(layer, r.adapter);
            calibrated.emplace(layer, std::move(r));
        }
        return calibrated;
    }

    std::vector<TokenId> prompt() const {
        if (!config_.prompt_tokens.empty()) return config_.prompt_tokens;
        require(config_.prompt_length >= 1, ErrorCode::kConfig, "config: prompt.length must be >= 1");
        return synthetic_corpus(1, config_.prompt_length, model_.spec().vocab_size, config_.corpus_repeat_prob,
                                mix_seed(config_.seed, 2))
            .front();
    }

    fs::path out(const char* name) const { return config_.output_dir / name; }

private:
    static Model make_model(const RunConfig& c) { return c.model_path ? load_model(*c.model_path) : Model(c.model); }

    const RunConfig& config_;
    Model model_;
    std::optional<Corpus> corpus_;
    std::string corpus_id_;
    std::optional<TraceSet> traces_;
    std::optional<RedundancyProfile> profile_;
};

std::set<std::size_t> skippable_layers(const RunConfig& c, std::size_t n) {
    std::set<std::size_t> s;
    for (std::size_t l = c.protected_prefix; l + c.protected_suffix < n; ++l) s.insert(l);
    return s;
}

std::string tokens_text(const std::vector<TokenId>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) out += (i ? " " : "") + std::to_string(tokens[i]);
    return out + "\n";
}

// null members read as absent
json without_nulls(const json& j) {
    if (!j.is_object()) return j;
    json out = json::object();
    for (const auto& [key, value] : j.items())
        if (!value.is_null()) out[key] = without_nulls(value);
    return out;
}

}  // namespace

RunConfig RunConfig::from_json(const json& raw) {
    RunConfig c;
    try {
        const json j = without_nulls(raw);
        check_keys(j,
                   {"seed", "threads", "output_dir", "model", "schedule", "corpus", "prompt", "decode", "profile",
                    "calibration", "sweep", "latency", "cost"},
                   "");
        c.seed = get_or<std::uint64_t>(j, "seed", 0);
        c.threads = get_or<unsigned>(j, "threads", 1);
        c.output_dir = get_or<std::string>(j, "output_dir", "out");

        const json model = section(j, "model");
        check_keys(model,
                   {"n_layers", "d_model", "n_heads", "n_kv_heads", "d_ff", "vocab_size", "lora_rank", "lora_alpha",
                    "seed", "path"},
                   "model");
        json spec = model;
        spec.erase("path");
        if (!spec.contains("seed")) spec["seed"] = c.seed;
        c.model = model_spec_from_json(spec);
        if (model.contains("path")) c.model_path = model.at("path").get<std::string>();

        const json sched = section(j, "schedule");
        check_keys(sched, {"p", "drop_layers", "drop_list_path", "k", "protected_prefix", "protected_suffix"},
                   "schedule");
        if (sched.contains("p")) c.p = sched.at("p").get<double>();
        if (sched.contains("drop_layers"))
            c.drop_layers = sched.at("drop_layers").get<std::set<std::size_t>>();
        if (sched.contains("drop_list_path")) c.drop_list_path = sched.at("drop_list_path").get<std::string>();
        require(!(c.p && c.drop_layers), ErrorCode::kConfig, "config: schedule.p and schedule.drop_layers are exclusive");
        c.k = get_or<std::size_t>(sched, "k", c.k);
        c.protected_prefix = get_or<std::size_t>(sched, "protected_prefix", c.protected_prefix);
        c.protected_suffix = get_or<std::size_t>(sched, "protected_suffix", c.protected_suffix);

        const json corpus = section(j, "corpus");
        check_keys(corpus, {"path", "sequences", "length", "repeat_prob"}, "corpus");
        if (corpus.contains("path")) c.corpus_path = corpus.at("path").get<std::string>();
        c.corpus_sequences = get_or<std::size_t>(corpus, "sequences", c.corpus_sequences);
        c.corpus_length = get_or<std::size_t>(corpus, "length", c.corpus_length);
        c.corpus_repeat_prob = get_or<double>(corpus, "repeat_prob", c.corpus_repeat_prob);

        const json prompt = section(j, "prompt");
        check_keys(prompt, {"tokens", "length"}, "prompt");
        c.prompt_tokens = get_or<std::vector<TokenId>>(prompt, "tokens", {});
        c.prompt_length = get_or<std::size_t>(prompt, "length", c.prompt_length);

        const json dec = section(j, "decode");
        check_keys(dec, {"m"}, "decode");
        c.m = get_or<std::size_t>(dec, "m", c.m);

        const json prof = section(j, "profile");
        check_keys(prof, {"delta_max", "score_deltas", "threshold"}, "profile");
        c.delta_max = get_or<std::size_t>(prof, "delta_max", c.delta_max);
        c.score_deltas = get_or<std::vector<std::size_t>>(prof, "score_deltas", c.score_deltas);
        c.threshold = get_or<double>(prof, "threshold", c.threshold);

        const json cal = section(j, "calibration");
        check_keys(cal, {"enabled", "rank", "lambda", "adapters_path"}, "calibration");
        c.calibrate = get_or<bool>(cal, "enabled", c.calibrate);
        c.calibration_rank = get_or<std::size_t>(cal, "rank", c.calibration_rank);
        c.calibration_lambda = get_or<double>(cal, "lambda", c.calibration_lambda);
        if (cal.contains("adapters_path")) c.adapters_path = cal.at("adapters_path").get<std::string>();

        const json sweep = section(j, "sweep");
        check_keys(sweep, {"p", "k"}, "sweep");
        c.sweep_p = get_or<std::vector<double>>(sweep, "p", c.sweep_p);
        c.sweep_k = get_or<std::vector<std::size_t>>(sweep, "k", c.sweep_k);

        const json lat = section(j, "latency");
        check_keys(lat, {"seconds_per_mac"}, "latency");
        c.seconds_per_mac = get_or<double>(lat, "seconds_per_mac", c.seconds_per_mac);

        c.cost = section(j, "cost");
        check_keys(c.cost,
                   {"rho", "p", "k", "w", "L", "a", "A", "B", "d", "r", "n", "Lctx", "tau_ref", "tau_lora", "pq", "h",
                    "h_kv", "d_model", "b", "batch", "N"},
                   "cost");
    } catch (const json::exception& e) {
        fail(ErrorCode::kConfig, std::string("config: ") + e.what());
    }
    require(c.threads >= 1, ErrorCode::kConfig, "config: threads must be >= 1");
    return c;
}

json load_config_document(const std::optional<fs::path>& path, const json& overrides) {
    json doc = json::object();
    if (path) {
        const std::string text = read_file(*path);
        try {
            doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
        } catch (const json::exception& e) {
            fail(ErrorCode::kConfig, "config " + path->string() + ": " + e.what());
        }
        require(doc.is_object(), ErrorCode::kConfig, "config " + path->string() + ": top level must be an object");
    }
    if (!overrides.is_null()) doc.merge_patch(overrides);
    return doc;
}

Corpus parse_corpus(const std::string& text) {
    Corpus corpus;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::vector<TokenId> seq;
        std::string tok;
        while (ls >> tok) {
            std::size_t used = 0;
            unsigned long v = 0;
            try {
                v = std::stoul(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            require(used == tok.size(), ErrorCode::kInput,
                    "corpus line " + std::to_string(line_no) + ": bad token '" + tok + "'");
            seq.push_back(static_cast<TokenId>(v));
        }
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

Corpus synthetic_corpus(std::size_t sequences, std::size_t length, std::size_t vocab, double repeat_prob,
                        std::uint64_t seed) {
    require(vocab >= 1, ErrorCode::kParameter, "synthetic_corpus: vocab must be positive");
    Rng rng(seed);
    Corpus corpus(sequences);
    for (auto& seq : corpus) {
        seq.reserve(length);
        for (std::size_t t = 0; t < length; ++t) {
            if (t > 0 && rng.uniform() < repeat_prob)
                seq.push_back(seq.back());
            else
                seq.push_back(static_cast<TokenId>(rng.below(vocab)));
        }
    }
    return corpus;
}

DriftMetrics compare_logits(const std::vector<Vector>& reference, const std::vector<Vector>& candidate) {
    require(reference.size() == candidate.size(), ErrorCode::kShape, "compare_logits: step count mismatch");
    DriftMetrics m;
    if (reference.empty()) return m;
    double sum = 0.0;
    std::size_t count = 0;
    std::size_t agree = 0;
    for (std::size_t t = 0; t < reference.size(); ++t) {
        const Vector& r = reference[t];
        const Vector& c = candidate[t];
        require(r.dim() == c.dim(), ErrorCode::kShape, "compare_logits: vocab mismatch");
        double step_max = 0.0;
        double ref_max = 0.0;
        for (std::size_t i = 0; i < r.dim(); ++i) {
            const double diff = std::abs(static_cast<double>(c[i]) - r[i]);
            step_max = std::max(step_max, diff);
            ref_max = std::max(ref_max, std::abs(static_cast<double>(r[i])));
            sum += diff;
            ++count;
        }
        m.max_abs_logit_dev = std::max(m.max_abs_logit_dev, step_max);
        if (ref_max > 0.0) m.max_rel_logit_dev = std::max(m.max_rel_logit_dev, step_max / ref_max);
        agree += argmax(r.span()) == argmax(c.span()) ? 1 : 0;
    }
    m.mean_abs_logit_dev = sum / static_cast<double>(count);
    m.token_agreement = static_cast<double>(agree) / static_cast<double>(reference.size());
    return m;
}

json Report::to_json() const {
    return {
        {"schedule",
         {{"n_layers", n_layers}, {"drop_layers", drop_layers}, {"k", k}, {"w", k + 1}, {"rho", rho},
          {"p", p_effective}}},
        {"m", m},
        {"prompt_length", prompt_length},
        {"mean_cache_length", mean_cache_length},
        {"compute_fit", {{"A", fitted.A}, {"B", fitted.B}, {"d", fitted.d}, {"r", fitted.r}, {"rms_residual", fit_rms_residual}}},
        {"speedup",
         {{"predicted", predicted_speedup},
          {"predicted_inf", predicted_speedup_inf},
          {"measured", measured_speedup},
          {"relative_error", speedup_rel_error}}},
        {"cycle_macs", {{"predicted", predicted_cycle_macs}, {"measured", measured_cycle_macs}}},
        {"kv_bytes", {{"predicted", predicted_kv_bytes}, {"measured", measured_kv_bytes}, {"baseline", baseline_kv_bytes}}},
        {"drift",
         {{"max_abs_logit_dev", drift.max_abs_logit_dev},
          {"mean_abs_logit_dev", drift.mean_abs_logit_dev},
          {"max_rel_logit_dev", drift.max_rel_logit_dev},
          {"token_agreement", drift.token_agreement},
          {"free_run_token_agreement", free_run_token_agreement}}},
        {"decode_cache_entries", decode_cache_entries},
    };
}

PairedRun run_paired_decode(const Model& model, const Schedule& schedule, const std::vector<TokenId>& prompt,
                            std::size_t m, const DecodeResult* reference) {
    const ModelSpec& spec = model.spec();
    const std::size_t n = spec.n_layers;
    PairedRun run;
    run.reference = reference ? *reference : decode(model, Schedule{}, prompt, m);
    run.scheduled = decode(model, schedule, prompt, m);
    DecodeOptions forced;
    forced.forced_tokens = run.reference.tokens;
    const DecodeResult teacher = decode(model, schedule, prompt, m, forced);

    Report& rep = run.report;
    rep.n_layers = n;
    rep.drop_layers.assign(schedule.drop_set.begin(), schedule.drop_set.end());
    rep.k = schedule.k;
    rep.rho = drop_ratio(schedule, n);
    const std::size_t S = schedule.skippable_count(n);
    rep.p_effective = S ? static_cast<double>(schedule.drop_set.size()) / static_cast<double>(S) : 0.0;
    rep.m = m;
    rep.prompt_length = prompt.size();
    rep.mean_cache_length = static_cast<double>(prompt.size()) + (static_cast<double>(m) - 1.0) / 2.0;

    try {
        const ComputeFit fit = fit_compute_params(run.reference.stats, spec.d_model, spec.lora_rank);
        rep.fitted = fit.params;
        rep.fit_rms_residual = fit.rms_residual;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::kRankDeficient) throw;
        // One decode step gives a single cache length; use the instrumented
        // constants directly.
        const double d = static_cast<double>(spec.d_model);
        const double intercept = static_cast<double>(full_layer_macs(spec, 0));
        rep.fitted = ComputeParams{intercept / (d * d), 2.0, spec.d_model, spec.lora_rank, n};
    }
    rep.fitted.n = n;

    rep.predicted_speedup = speedup(rep.fitted, rep.rho, rep.k, rep.mean_cache_length);
    rep.predicted_speedup_inf = speedup_inf(rep.rho, rep.k);
    rep.measured_speedup = static_cast<double>(run.reference.stats.layer_total_macs()) /
                           static_cast<double>(run.scheduled.stats.layer_total_macs());
    rep.speedup_rel_error = std::abs(rep.measured_speedup - rep.predicted_speedup) / rep.predicted_speedup;

    const std::size_t cycle = std::min(m, schedule.k + 1);
    double cycle_macs = 0.0;
    for (std::size_t t = 0; t < cycle; ++t) cycle_macs += static_cast<double>(run.scheduled.stats.step_layer_macs(t));
    rep.measured_cycle_macs = cycle_macs / static_cast<double>(cycle);
    rep.predicted_cycle_macs = c_avg(rep.fitted, rep.rho, rep.k,
                                     static_cast<double>(prompt.size()) + (static_cast<double>(cycle) - 1.0) / 2.0);

    KvParams kv;
    kv.L = n;
    kv.a = n - S;
    kv.h = spec.n_heads;
    kv.h_kv = spec.n_kv_heads;
    kv.d_model = spec.d_model;
    kv.b = sizeof(Real);
    kv.batch = 1;
    kv.N = m;
    kv.p = rep.p_effective;
    kv.w = schedule.k + 1;
    rep.predicted_kv_bytes = kv_drop(kv);
    rep.baseline_kv_bytes = kv_baseline(kv);
    const double entry_bytes = kv.bytes_per_token_layer();
    for (std::size_t i = 0; i < n; ++i) {
        rep.decode_cache_entries.push_back(run.scheduled.stats.decode_entries(i));
        rep.measured_kv_bytes += static_cast<double>(rep.decode_cache_entries.back()) * entry_bytes;
    }

    rep.drift = compare_logits(run.reference.logits, teacher.logits);
    std::size_t same = 0;
    for (std::size_t t = 0; t < m; ++t) same += run.reference.tokens[t] == run.scheduled.tokens[t] ? 1 : 0;
    rep.free_run_token_agreement = static_cast<double>(same) / static_cast<double>(m);
    return run;
}

CommandResult cmd_profile(const RunConfig& config) {
    Workspace ws(config);
    require(config.p.has_value(), ErrorCode::kConfig, "profile: schedule.p is required");
    const ModelSpec& spec = ws.model().spec();
    const RedundancyProfile& profile = ws.profile();
    const std::set<std::size_t> drop =
        build_drop_list(profile, *config.p, config.protected_prefix, config.protected_suffix);
    const std::size_t horizon = similarity_horizon(profile, config.threshold);

    CommandResult res;
    auto write = [&](const char* name, const std::string& bytes) {
        atomic_write(ws.out(name), bytes);
        res.artifacts.push_back(ws.out(name));
    };
    write("profile.csv", profile.to_csv());
    write("drop_list.txt", drop_list_text(drop));
    json sidecar = drop_list_sidecar(drop, *config.p, spec.n_layers, config.protected_prefix,
                                     config.protected_suffix, profile);
    sidecar["threshold"] = config.threshold;
    sidecar["horizon"] = horizon;
    write("drop_list.json", sidecar.dump(2) + "\n");
    save_model(ws.model(), ws.out("model.bin"));
    res.artifacts.push_back(ws.out("model.bin"));
    save_traces(ws.traces(), ws.out("traces.bin"));
    res.artifacts.push_back(ws.out("traces.bin"));

    std::ostringstream s;
    s << "profiled " << ws.traces().size() << " sequences, " << spec.n_layers << " layers, delta_max "
      << config.delta_max << "\n";
    s << "similarity horizon @" << format_real(config.threshold) << ": " << horizon << "\n";
    s << "drop list (p=" << format_real(*config.p) << "): " << join_indices(drop) << "\n";
    s << "rho = " << format_real(static_cast<double>(drop.size()) / static_cast<double>(spec.n_layers)) << "\n";
    res.summary = s.str();
    return res;
}

CommandResult cmd_calibrate(const RunConfig& config) {
    RunConfig c = config;
    c.adapters_path.reset();  // always fit here
    c.calibrate = true;
    Workspace ws(c);
    const std::set<std::size_t> drop = ws.drop_set();
    ws.schedule(drop);  // validates protections
    const auto results = ws.install_adapters(drop);

    std::map<std::size_t, LoraAdapter> adapters;
    CsvWriter csv({"layer", "rank", "lambda", "samples", "objective", "reuse_objective", "full_objective"});
    for (const auto& [layer, r] : results) {
        adapters.emplace(layer, r.adapter);
        csv.add_row({std::to_string(layer), std::to_string(r.adapter.rank()), format_real(c.calibration_lambda),
                     std::to_string(r.samples), format_real(r.objective), format_real(r.reuse_objective),
                     format_real(r.full_objective)});
    }
    CommandResult res;
    save_adapters(adapters, ws.out("adapters.bin"));
    atomic_write(ws.out("calibration.csv"), csv.str());
    res.artifacts = {ws.out("adapters.bin"), ws.out("calibration.csv")};
    std::ostringstream s;
    s << "calibrated " << results.size() << " layers (" << join_indices(drop) << ") at rank " << ws.rank()
      << ", lambda " << format_real(c.calibration_lambda) << "\n";
    for (const auto& [layer, r] : results)
        s << "  layer " << layer << ": objective " << format_real(r.objective, 6) << " vs reuse "
          << format_real(r.reuse_objective, 6) << "\n";
    res.summary = s.str();
    return res;
}

CommandResult cmd_decode(const RunConfig& config) {
    Workspace ws(config);
    const std::set<std::size_t> drop = ws.drop_set();
    const Schedule schedule = ws.schedule(drop);
    ws.install_adapters(drop);
    const std::vector<TokenId> prompt = ws.prompt();
    const PairedRun run = run_paired_decode(ws.model(), schedule, prompt, config.m);

    CommandResult res;
    atomic_write(ws.out("tokens.txt"), tokens_text(run.scheduled.tokens));
    atomic_write(ws.out("stats.csv"), run.scheduled.stats.to_csv());
    atomic_write(ws.out("report.json"), run.report.to_json().dump(2) + "\n");
    res.artifacts = {ws.out("tokens.txt"), ws.out("stats.csv"), ws.out("report.json")};

    const Report& r = run.report;
    std::ostringstream s;
    s << "decoded " << config.m << " tokens, drop layers " << join_indices(drop) << ", k=" << config.k
      << ", rho=" << format_real(r.rho, 6) << "\n";
    s << "MAC speedup: measured " << fmt("%.4f", r.measured_speedup) << ", predicted "
      << fmt("%.4f", r.predicted_speedup) << " (S_inf " << fmt("%.4f", r.predicted_speedup_inf) << ")\n";
    s << "KV bytes: measured " << format_real(r.measured_kv_bytes) << ", predicted "
      << format_real(r.predicted_kv_bytes) << ", baseline " << format_real(r.baseline_kv_bytes) << "\n";
    s << "drift: max |dlogit| " << format_real(r.drift.max_abs_logit_dev, 6) << ", mean "
      << format_real(r.drift.mean_abs_logit_dev, 6) << ", token agreement "
      << fmt("%.4f", r.drift.token_agreement) << "\n";
    res.summary = s.str();
    return res;
}

std::vector<std::string> sweep_csv_header() {
    return {"rho",           "k",          "w",                "Lctx",           "speedup",        "speedup_inf",
            "save_percent",  "p50",        "p95",              "p",              "drop_layers",    "measured_speedup",
            "kv_bytes",      "kv_bytes_predicted", "max_logit_dev", "mean_logit_dev", "token_agreement"};
}

CommandResult cmd_sweep(const RunConfig& config) {
    Workspace ws(config);
    const std::size_t n = ws.model().spec().n_layers;
    const RedundancyProfile& profile = ws.profile();
    ws.install_adapters(skippable_layers(config, n));
    const std::vector<TokenId> prompt = ws.prompt();
    const Model& model = ws.model();
    const DecodeResult reference = decode(model, Schedule{}, prompt, config.m);

    struct Cell {
        double p;
        std::size_t k;
    };
    std::vector<Cell> cells{{0.0, 0}};
    for (double p : config.sweep_p)
        for (std::size_t k : config.sweep_k) cells.push_back({p, k});

    std::vector<std::vector<std::string>> rows(cells.size());
    auto run_cell = [&](std::size_t idx) {
        const Cell& cell = cells[idx];
        const Schedule schedule =
            ws.schedule(build_drop_list(profile, cell.p, config.protected_prefix, config.protected_suffix));
        const PairedRun run = run_paired_decode(model, schedule, prompt, config.m, &reference);
        const Report& r = run.report;

        const double lctx = r.mean_cache_length;
        const double full = c_full(r.fitted, lctx);
        const double drop_count = static_cast<double>(schedule.drop_set.size());
        LatencyPair lat;
        lat.tau_ref = static_cast<double>(n) * full * config.seconds_per_mac;
        lat.tau_lora = ((static_cast<double>(n) - drop_count) * full + drop_count * c_lora(r.fitted)) *
                       config.seconds_per_mac;
        lat.validate();
        const std::size_t a = n - schedule.skippable_count(n);

        rows[idx] = {format_real(r.rho),
                     std::to_string(cell.k),
                     std::to_string(cell.k + 1),
                     format_real(lctx),
                     format_real(r.predicted_speedup),
                     format_real(r.predicted_speedup_inf),
                     format_real(kv_save_percent(n, a, r.p_effective, static_cast<double>(cell.k + 1))),
                     format_real(latency_quantile(0.50, cell.k, lat)),
                     format_real(latency_quantile(0.95, cell.k, lat)),
                     format_real(cell.p),
                     [&] {
                         std::string s;
                         for (std::size_t l : schedule.drop_set) s += (s.empty() ? "" : ";") + std::to_string(l);
                         return s;
                     }(),
                     format_real(r.measured_speedup),
                     format_real(r.measured_kv_bytes),
                     format_real(r.predicted_kv_bytes),
                     format_real(r.drift.max_abs_logit_dev),
                     format_real(r.drift.mean_abs_logit_dev),
                     format_real(r.drift.token_agreement)};
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(cells.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < cells.size(); i += workers) run_cell(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    CsvWriter csv(sweep_csv_header());
    for (const auto& row : rows) csv.add_row(row);
    CommandResult res;
    atomic_write(ws.out("sweep.csv"), csv.str());
    res.artifacts = {ws.out("sweep.csv")};
    res.summary = "sweep: " + std::to_string(csv.rows()) + " rows written to " + ws.out("sweep.csv").string() + "\n";
    return res;
}

CommandResult cmd_cost(const RunConfig& config) {
    const json& q = config.cost;
    double rho = 0.0;
    double p = 0.0;
    std::size_t k = 3;
    std::size_t w = 4;
    ComputeParams cp;
    KvParams kv;
    LatencyPair lat;
    double lctx = 0.0;
    std::optional<double> pq;
    try {
        cp.A = get_or<double>(q, "A", 12.0);
        cp.B = get_or<double>(q, "B", 2.0);
        cp.d = get_or<std::size_t>(q, "d", 64);
        cp.r = get_or<std::size_t>(q, "r", 4);
        kv.L = get_or<std::size_t>(q, "L", 32);
        kv.a = get_or<std::size_t>(q, "a", 4);
        cp.n = get_or<std::size_t>(q, "n", kv.L);
        kv.h = get_or<std::size_t>(q, "h", 32);
        kv.h_kv = get_or<std::size_t>(q, "h_kv", 8);
        kv.d_model = get_or<std::size_t>(q, "d_model", 4096);
        kv.b = get_or<std::size_t>(q, "b", 2);
        kv.batch = get_or<std::size_t>(q, "batch", 1);
        kv.N = get_or<std::size_t>(q, "N", 0);
        lctx = get_or<double>(q, "Lctx", 0.0);
        lat.tau_ref = get_or<double>(q, "tau_ref", 2e-3);
        lat.tau_lora = get_or<double>(q, "tau_lora", 1e-3);
        if (q.contains("pq")) pq = q.at("pq").get<double>();

        if (q.contains("k")) k = q.at("k").get<std::size_t>();
        if (q.contains("w")) {
            w = q.at("w").get<std::size_t>();
            require(w >= 1, ErrorCode::kParameter, "cost: w must be >= 1");
            if (q.contains("k"))
                require(w == k + 1, ErrorCode::kParameter, "cost: w must equal k + 1");
            else
                k = w - 1;
        } else {
            w = k + 1;
        }
        require(kv.a <= kv.L && kv.L >= 1, ErrorCode::kParameter, "cost: need 0 <= a <= L");
        const double S = static_cast<double>(kv.L - kv.a);
        const double L = static_cast<double>(kv.L);
        if (q.contains("rho")) {
            rho = q.at("rho").get<double>();
            p = q.contains("p") ? q.at("p").get<double>() : (S > 0 ? std::min(1.0, rho * L / S) : 0.0);
        } else {
            p = get_or<double>(q, "p", 0.5);
            rho = p * S / L;
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::kConfig, std::string("cost: ") + e.what());
    }
    cp.validate();
    lat.validate();
    kv.p = p;
    kv.w = w;
    kv.validate();

    auto quantile_label = [&](double prob) {
        const double v = latency_quantile(prob, k, lat);
        return format_real(v) + (v == lat.tau_ref && 1.0 / (static_cast<double>(k) + 1.0) > 1.0 - prob
                                     ? " (tau_ref)"
                                     : " (tau_lora)");
    };
    std::ostringstream s;
    auto line = [&](const std::string& name, const std::string& value) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%-14s", name.c_str());
        s << buf << value << "\n";
    };
    line("rho", format_real(rho));
    line("p", format_real(p));
    line("k", std::to_string(k));
    line("w", std::to_string(w));
    line("Lctx", format_real(lctx));
    line("c_full", format_real(c_full(cp, lctx)));
    line("c_lora", format_real(c_lora(cp)));
    line("gamma", format_real(gamma(cp, lctx), 6));
    line("c_avg", format_real(c_avg(cp, rho, k, lctx)));
    line("speedup", fmt("%.4f", speedup(cp, rho, k, lctx)));
    line("speedup_inf", fmt("%.4f", speedup_inf(rho, k)));
    line("save_percent", fmt("%.4f", kv_save_percent(kv.L, kv.a, p, static_cast<double>(w))) + "%");
    if (kv.N > 0) {
        line("kv_base_bytes", format_real(kv_baseline(kv)));
        line("kv_drop_bytes", format_real(kv_drop(kv)));
    }
    line("p50", quantile_label(0.50));
    line("p95", quantile_label(0.95));
    if (pq && *pq != 0.50 && *pq != 0.95) line("p" + format_real(*pq * 100.0, 6), quantile_label(*pq));

    CommandResult res;
    res.summary = s.str();
    return res;
}

CommandResult run_command(const std::string& name, const RunConfig& config) {
    if (name == "profile") return cmd_profile(config);
    if (name == "calibrate") return cmd_calibrate(config);
    if (name == "decode") return cmd_decode(config);
    if (name == "sweep") return cmd_sweep(config);
    if (name == "cost") return cmd_cost(config);
    fail(ErrorCode::kConfig, "unknown command '" + name + "'");
}

int exit_code_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::kConfig:
        case ErrorCode::kParameter:
        case ErrorCode::kSpec:
        case ErrorCode::kInput: return 1;
        case ErrorCode::kIo: return 2;
        case ErrorCode::kShape:
        case ErrorCode::kNumeric:
        case ErrorCode::kUndefinedSimilarity:
        case ErrorCode::kRankDeficient: return 3;
    }
    return 3;
}

}  // namespace loradrop
