#include "bsdecert/bsdecert.h"

#include "bsdecert/error.hpp"
#include "bsdecert/experiment.hpp"
#include "bsdecert/parallel.hpp"

#include <new>
#include <string>

struct bsde_config {
    bsdecert::ExperimentConfig cfg;
    std::string hash;
    std::string json;

    void refresh() {
        hash = bsdecert::config_hash(cfg);
        json = bsdecert::config_json(cfg);
    }
};

struct bsde_result {
    bsdecert::RunOutput out;
};

namespace {

thread_local std::string last_error;

bsde_status status_of(const std::exception& e) {
    return bsdecert::exit_code_for(e) == 2 ? BSDE_CONFIG_ERROR : BSDE_NUMERICAL_FAILURE;
}

template <class Fn>
bsde_status guarded(Fn fn) {
    last_error.clear();
    try {
        fn();
        return BSDE_OK;
    } catch (const std::bad_alloc& e) {
        last_error = bsdecert::error_json(e);
        return BSDE_NUMERICAL_FAILURE;
    } catch (const std::exception& e) {
        last_error = bsdecert::error_json(e);
        return status_of(e);
    }
}

bsde_status invalid(const char* what) {
    last_error = std::string(R"({"error":"invalid_handle","field":")") + what +
                 R"(","message":"null handle or pointer","value":null,"exit_code":2})";
    return BSDE_INVALID_HANDLE;
}

template <class Run>
bsde_status run(const bsde_config* cfg, bsde_result** out, Run r) {
    if (!cfg) return invalid("config");
    if (!out) return invalid("out");
    *out = nullptr;
    bsdecert::RunOutput ro;
    const bsde_status st = guarded([&] { ro = r(cfg->cfg); });
    if (st == BSDE_OK) *out = new bsde_result{std::move(ro)};
    return st;
}

}  // namespace

extern "C" {

const char* bsde_version(void) { return "1.0.0"; }

const char* bsde_last_error(void) { return last_error.c_str(); }

void bsde_set_threads(unsigned n) { bsdecert::set_thread_cap(n); }

bsde_status bsde_config_parse(const char* json_text, bsde_config** out) {
    if (!json_text) return invalid("json_text");
    if (!out) return invalid("out");
    *out = nullptr;
    return guarded([&] {
        auto* c = new bsde_config{bsdecert::parse_config(json_text), {}, {}};
        c->refresh();
        *out = c;
    });
}

bsde_status bsde_config_load(const char* path, bsde_config** out) {
    if (!path) return invalid("path");
    if (!out) return invalid("out");
    *out = nullptr;
    return guarded([&] {
        auto* c = new bsde_config{bsdecert::load_config(path), {}, {}};
        c->refresh();
        *out = c;
    });
}

void bsde_config_free(bsde_config* cfg) { delete cfg; }

bsde_status bsde_config_set_output_dir(bsde_config* cfg, const char* dir) {
    if (!cfg) return invalid("config");
    if (!dir) return invalid("dir");
    return guarded([&] {
        cfg->cfg.output_dir = dir;
        cfg->refresh();
    });
}

const char* bsde_config_hash(const bsde_config* cfg) { return cfg ? cfg->hash.c_str() : ""; }

const char* bsde_config_json(const bsde_config* cfg) { return cfg ? cfg->json.c_str() : ""; }

bsde_status bsde_solve(const bsde_config* cfg, bsde_result** out) { return run(cfg, out, bsdecert::run_solve); }

bsde_status bsde_certify(const bsde_config* cfg, bsde_result** out) { return run(cfg, out, bsdecert::run_certify); }

bsde_status bsde_check(const bsde_config* cfg, bsde_result** out) { return run(cfg, out, bsdecert::run_check); }

bsde_status bsde_modulus(const char* family, const double* params, size_t n_params, const char* action, double r,
                         double u0, size_t points, const char* output_dir, bsde_result** out) {
    if (!family) return invalid("family");
    if (!action) return invalid("action");
    if (!output_dir) return invalid("output_dir");
    if (!out) return invalid("out");
    if (n_params > 0 && !params) return invalid("params");
    *out = nullptr;
    bsdecert::ModulusRequest req;
    req.family = family;
    req.params.assign(params, params + n_params);
    req.action = action;
    req.r = r;
    req.u0 = u0;
    req.points = points;
    req.output_dir = output_dir;
    bsdecert::RunOutput ro;
    const bsde_status st = guarded([&] { ro = bsdecert::run_modulus(req); });
    if (st == BSDE_OK) *out = new bsde_result{std::move(ro)};
    return st;
}

const char* bsde_result_summary(const bsde_result* res) { return res ? res->out.summary_json.c_str() : ""; }

size_t bsde_result_file_count(const bsde_result* res) { return res ? res->out.files.size() : 0; }

const char* bsde_result_file(const bsde_result* res, size_t i) {
    if (!res || i >= res->out.files.size()) return nullptr;
    return res->out.files[i].c_str();
}

void bsde_result_free(bsde_result* res) { delete res; }

const char* bsde_zoo_list(void) {
    static const std::string csv = bsdecert::zoo_list_csv();
    return csv.c_str();
}

}  // extern "C"
