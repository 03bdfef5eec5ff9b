// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Flags become a JSON merge patch over the optional
// config file and the work happens behind the C API.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "loradrop/loradrop.h"

namespace {

using nlohmann::json;

// "a.b.c=value": value is parsed as JSON when possible, else taken as a string.
void apply_set(json& patch, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key.path=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &patch;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw CLI::ValidationError("--set", "empty key segment in '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::vector<std::string> sets;
};

struct PipelineFlags {
    std::optional<double> p;
    std::optional<std::size_t> k;
    std::optional<std::size_t> m;
    std::vector<std::size_t> drop;
    std::string model;
    std::string corpus;
    std::string adapters;
    std::string drop_list;
};

struct CostFlags {
    std::optional<double> rho, p, A, B, Lctx, tau_ref, tau_lora, pq;
    std::optional<std::size_t> k, w, L, a, d, r, n, h, h_kv, d_model, b, batch, N;
    bool p95 = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("-o,--out", c.out, "Output directory");
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("--threads", c.threads, "Worker threads");
    app->add_option("--set", c.sets, "Override a config value, key.path=value (repeatable)");
}

void add_pipeline(CLI::App* app, PipelineFlags& f) {
    app->add_option("--p", f.p, "Drop fraction of the skippable layers");
    app->add_option("--k", f.k, "Surrogate steps between refreshes");
    app->add_option("--m", f.m, "Tokens to decode");
    app->add_option("--drop", f.drop, "Explicit drop layers")->delimiter(',');
    app->add_option("--drop-list", f.drop_list, "Drop list file (one index per line)");
    app->add_option("--model", f.model, "Model checkpoint");
    app->add_option("--corpus", f.corpus, "Corpus file");
    app->add_option("--adapters", f.adapters, "Adapter file");
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

json common_patch(const Common& c) {
    json patch = json::object();
    if (!c.out.empty()) patch["output_dir"] = c.out;
    put(patch, "seed", c.seed);
    put(patch, "threads", c.threads);
    return patch;
}

void pipeline_patch(json& patch, const PipelineFlags& f) {
    put(patch["schedule"], "p", f.p);
    put(patch["schedule"], "k", f.k);
    if (!f.drop.empty()) patch["schedule"]["drop_layers"] = f.drop;
    if (!f.drop_list.empty()) patch["schedule"]["drop_list_path"] = f.drop_list;
    put(patch["decode"], "m", f.m);
    if (!f.model.empty()) patch["model"]["path"] = f.model;
    if (!f.corpus.empty()) patch["corpus"]["path"] = f.corpus;
    if (!f.adapters.empty()) patch["calibration"]["adapters_path"] = f.adapters;
    for (const char* key : {"schedule", "decode", "model", "corpus", "calibration"})
        if (patch[key].is_null() || patch[key].empty()) patch.erase(key);
}

json cost_patch(const CostFlags& f) {
    json c = json::object();
    put(c, "rho", f.rho);
    put(c, "p", f.p);
    put(c, "k", f.k);
    put(c, "w", f.w);
    put(c, "L", f.L);
    put(c, "a", f.a);
    put(c, "A", f.A);
    put(c, "B", f.B);
    put(c, "d", f.d);
    put(c, "r", f.r);
    put(c, "n", f.n);
    put(c, "Lctx", f.Lctx);
    put(c, "tau_ref", f.tau_ref);
    put(c, "tau_lora", f.tau_lora);
    put(c, "h", f.h);
    put(c, "h_kv", f.h_kv);
    put(c, "d_model", f.d_model);
    put(c, "b", f.b);
    put(c, "batch", f.batch);
    put(c, "N", f.N);
    if (f.pq)
        c["pq"] = *f.pq;
    else if (f.p95)
        c["pq"] = 0.95;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"loradrop: temporal layer scheduling with a low-rank surrogate"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ld_version()));

    Common common;
    PipelineFlags pipeline;
    CostFlags cost;

    std::vector<std::pair<std::string, CLI::App*>> commands;
    const std::vector<std::pair<std::string, std::string>> pipeline_commands = {
        {"profile", "Collect traces, measure redundancy, write a drop list"},
        {"calibrate", "Fit surrogate adapters for the drop layers"},
        {"decode", "Scheduled decode against a full reference"},
        {"sweep", "Grid over drop fraction and refresh interval"},
    };
    for (const auto& [name, help] : pipeline_commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        add_common(sub, common);
        add_pipeline(sub, pipeline);
        commands.emplace_back(name, sub);
    }

    CLI::App* cost_cmd = app.add_subcommand("cost", "Evaluate the analytic cost model");
    cost_cmd->set_help_flag("--help", "Print this help message and exit");
    add_common(cost_cmd, common);
    cost_cmd->add_option("--rho", cost.rho, "Drop ratio |drop| / L");
    cost_cmd->add_option("--p", cost.p, "Drop fraction of the skippable layers");
    cost_cmd->add_option("--k", cost.k, "Surrogate steps between refreshes");
    cost_cmd->add_option("--w", cost.w, "Refresh period in tokens");
    cost_cmd->add_option("--L", cost.L, "Total layers");
    cost_cmd->add_option("--a", cost.a, "Always-active layers");
    cost_cmd->add_option("--A", cost.A, "Projection cost coefficient");
    cost_cmd->add_option("--B", cost.B, "Attention cost coefficient");
    cost_cmd->add_option("--d", cost.d, "Hidden size for compute costs");
    cost_cmd->add_option("--r", cost.r, "Surrogate rank");
    cost_cmd->add_option("--n", cost.n, "Layers for compute costs");
    cost_cmd->add_option("--Lctx", cost.Lctx, "Context length");
    cost_cmd->add_option("--tau-ref", cost.tau_ref, "Refresh-step latency");
    cost_cmd->add_option("--tau-lora", cost.tau_lora, "Surrogate-step latency");
    cost_cmd->add_option("--pq", cost.pq, "Extra latency quantile to report");
    cost_cmd->add_flag("--p95", cost.p95, "Report the 0.95 quantile");
    cost_cmd->add_option("--h", cost.h, "Attention heads");
    cost_cmd->add_option("--h-kv", cost.h_kv, "KV heads");
    cost_cmd->add_option("--d-model", cost.d_model, "Hidden size for KV bytes");
    cost_cmd->add_option("--b", cost.b, "Bytes per element");
    cost_cmd->add_option("--batch", cost.batch, "Batch size");
    cost_cmd->add_option("--N", cost.N, "Generated tokens");
    commands.emplace_back("cost", cost_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    std::string command;
    for (const auto& [name, sub] : commands)
        if (sub->parsed()) command = name;

    json patch = common_patch(common);
    if (command == "cost") {
        const json c = cost_patch(cost);
        if (!c.empty()) patch["cost"] = c;
    } else {
        pipeline_patch(patch, pipeline);
    }
    try {
        for (const auto& s : common.sets) apply_set(patch, s);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "loradrop: " << e.what() << "\n";
        return 1;
    }

    const ld_status status =
        ld_run_command(command.c_str(), common.config.empty() ? nullptr : common.config.c_str(), patch.dump().c_str());
    if (status != LD_OK) {
        std::cerr << "loradrop " << command << ": " << ld_status_name(status) << ": " << ld_last_error() << "\n";
        return ld_exit_code_for_status(status);
    }
    std::cout << ld_last_output();
    return 0;
}
