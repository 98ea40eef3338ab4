#include "bsdecert/bsdecert.h"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

int report(bsde_status st, bsde_result* res) {
    if (st != BSDE_OK) {
        std::cerr << bsde_last_error() << '\n';
        return st == BSDE_CONFIG_ERROR || st == BSDE_INVALID_HANDLE ? 2 : 1;
    }
    std::cout << bsde_result_summary(res);
    bsde_result_free(res);
    return 0;
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

int usage_error(const std::string& field, const std::string& message) {
    std::cerr << R"({"error":"config","field":)" << quote(field) << R"(,"message":)" << quote(message)
              << R"(,"value":null,"exit_code":2})" << '\n';
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Certified Picard solver for non-Lipschitz BSDEs"};
    app.require_subcommand(1);

    std::optional<unsigned> threads;
    std::optional<std::string> output_dir;
    app.add_option("--threads", threads, "Cap on worker threads (results do not depend on it)");
    app.add_option("--output-dir", output_dir, "Output directory (overrides BSDE_OUTPUT_DIR and the config)");

    std::string config_path;
    auto* solve = app.add_subcommand("solve", "Picard solve; writes solution, trace and summary");
    auto* certify = app.add_subcommand("certify", "Contraction partition and majorant on the last interval");
    auto* check = app.add_subcommand("check", "Sampled hypothesis checks");
    for (auto* sub : {solve, certify, check}) sub->add_option("config", config_path, "JSON config file")->required();

    std::string family = "power", action = "diagnose";
    std::vector<double> params;
    double r = 2.0, u0 = 1.0;
    std::size_t points = 200;
    auto* modulus = app.add_subcommand("modulus", "Modulus diagnostics");
    modulus->add_option("--family", family, "linear | power | xlogx | xloglog")->required();
    modulus->add_option("--params", params, "Family parameters")->delimiter(',');
    modulus->add_option("--action", action, "diagnose | concavify | transform");
    modulus->add_option("--r", r, "Exponent for transform");
    modulus->add_option("--u0", u0, "Upper end of the examined range");
    modulus->add_option("--points", points, "Sample count");

    auto* zoo = app.add_subcommand("zoo-list", "List the generator zoo");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return usage_error("arguments", e.what());
    }

    if (!threads) {
        if (auto t = env("BSDE_THREADS")) {
            try {
                std::size_t used = 0;
                const long v = std::stol(*t, &used);
                if (used != t->size() || v < 0) throw std::invalid_argument("negative");
                threads = static_cast<unsigned>(v);
            } catch (const std::exception&) {
                return usage_error("BSDE_THREADS", "expected a nonnegative integer");
            }
        }
    }
    if (threads) bsde_set_threads(*threads);
    if (!output_dir) output_dir = env("BSDE_OUTPUT_DIR");

    if (zoo->parsed()) {
        std::cout << bsde_zoo_list();
        return 0;
    }
    if (modulus->parsed()) {
        bsde_result* res = nullptr;
        const bsde_status st = bsde_modulus(family.c_str(), params.data(), params.size(), action.c_str(), r, u0,
                                            points, output_dir.value_or("bsdecert_out").c_str(), &res);
        return report(st, res);
    }

    bsde_config* cfg = nullptr;
    bsde_status st = bsde_config_load(config_path.c_str(), &cfg);
    if (st != BSDE_OK) return report(st, nullptr);
    if (output_dir) {
        st = bsde_config_set_output_dir(cfg, output_dir->c_str());
        if (st != BSDE_OK) {
            bsde_config_free(cfg);
            return report(st, nullptr);
        }
    }
    bsde_result* res = nullptr;
    if (solve->parsed()) st = bsde_solve(cfg, &res);
    else if (certify->parsed()) st = bsde_certify(cfg, &res);
    else st = bsde_check(cfg, &res);
    bsde_config_free(cfg);
    return report(st, res);
}
