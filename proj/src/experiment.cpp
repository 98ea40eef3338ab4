#include "bsdecert/experiment.hpp"

#include "bsdecert/error.hpp"
#include "bsdecert/modulus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace bsdecert {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& msg) {
    fail(ErrorKind::Config, msg, field);
}

/// Strict reader over one JSON object: typed lookups by key, unknown keys rejected.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) config_error(path_.empty() ? "config" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    double number(const std::string& key, double def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number()) config_error(field(key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) config_error(field(key), "expected a finite number");
        return x;
    }
    std::optional<double> opt_number(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return number(key, 0.0);
    }
    std::uint64_t count(const std::string& key, std::uint64_t def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            config_error(field(key), "expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }
    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_boolean()) config_error(field(key), "expected true or false");
        return v.get<bool>();
    }
    std::string text(const std::string& key, const std::string& def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_string()) config_error(field(key), "expected a string");
        return v.get<std::string>();
    }
    std::optional<Reader> child(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return Reader(j_.at(key), field(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            (void)v;
            if (!seen_.count(k)) config_error(field(k), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class Fn>
void checked(const std::string& field, Fn fn) {
    try {
        fn();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        config_error(field, e.what());
    }
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

TerminalCondition::Kind terminal_kind(const std::string& s, const std::string& field) {
    if (s == "constant") return TerminalCondition::Kind::Constant;
    if (s == "brownian") return TerminalCondition::Kind::Brownian;
    if (s == "abs_capped") return TerminalCondition::Kind::AbsCapped;
    config_error(field, "terminal kind must be constant, brownian or abs_capped");
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["generator"] = {{"name", c.generator}, {"a", c.params.a},     {"b", c.params.b},
                      {"u", c.params.u},     {"v", c.params.v},     {"p", c.params.p},
                      {"delta", c.params.delta}, {"k", c.params.k}, {"d", c.params.d}};
    j["terminal"] = {{"kind", to_string(c.terminal.kind)}, {"value", c.terminal.value}};
    j["p"] = c.p;
    j["grid"] = {{"T", c.grid.T},
                 {"T_star", opt_json(c.grid.T_star)},
                 {"M", c.grid.M},
                 {"spacing", c.grid.spacing},
                 {"ratio", c.grid.ratio},
                 {"window_steps", c.grid.window_steps},
                 {"prefix_steps", c.grid.prefix_steps},
                 {"window_t_lo", opt_json(c.grid.window_t_lo)}};
    j["ensemble"] = {{"d", c.ensemble.d}, {"P", c.ensemble.P}, {"seed", c.ensemble.seed}};
    j["ledger"] = {{"m_p", opt_json(c.ledger.m_p)},
                   {"k_p", opt_json(c.ledger.k_p)},
                   {"bar_m_p", opt_json(c.ledger.bar_m_p)},
                   {"hat_m_p", opt_json(c.ledger.hat_m_p)},
                   {"tilde_m_p", opt_json(c.ledger.tilde_m_p)}};
    const auto& s = c.solver;
    j["solver"] = {{"basis", to_string(s.basis.kind)},
                   {"degree", s.basis.degree},
                   {"bins", s.basis.bins},
                   {"n_max", s.n_max},
                   {"tol_sp", s.tol_sp},
                   {"inner_iters", s.inner_iters},
                   {"init", s.init == SolverOptions::Init::Zero ? "zero" : "terminal"},
                   {"project_driver", s.project_driver},
                   {"t_floor", opt_json(s.t_floor)}};
    j["certify"] = {{"grid_M", c.certify.grid_M},
                    {"xi_moment", opt_json(c.certify.xi_moment)},
                    {"g00_moment", opt_json(c.certify.g00_moment)},
                    {"n_max", c.certify.majorant.n_max},
                    {"tol", c.certify.majorant.tol},
                    {"refine_nodes", c.certify.majorant.refine_nodes}};
    j["check"] = {{"alpha", opt_json(c.check.alpha)},
                  {"beta", opt_json(c.check.beta)},
                  {"rho", c.check.rho ? json(*c.check.rho) : json(nullptr)},
                  {"rho_scale", c.check.rho_scale},
                  {"y_range", c.check.sampler.y_range},
                  {"z_range", c.check.sampler.z_range},
                  {"count", c.check.sampler.count},
                  {"seed", c.check.sampler.seed}};
    j["output_dir"] = c.output_dir;
    return j;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

class Csv {
public:
    Csv(const std::string& hash, const std::vector<std::string>& columns) {
        out_ << "# config_hash=" << hash << '\n';
        row_strings(columns);
    }
    void row(std::initializer_list<double> values) {
        bool first = true;
        for (double v : values) {
            if (!first) out_ << ',';
            out_ << format_double(v);
            first = false;
        }
        out_ << '\n';
    }
    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }
    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

std::string write_file(const std::string& dir, const std::string& name, const std::string& content) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create output directory: " + ec.message(), "output_dir");
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::Io, "cannot open " + path + " for writing", "output_dir");
    f << content;
    if (!f) fail(ErrorKind::Io, "write to " + path + " failed", "output_dir");
    return path;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Shared setup
// ---------------------------------------------------------------------------

Generator make_generator(const ExperimentConfig& cfg) {
    Generator g;
    checked("generator", [&] { g = translate_hypotheses(zoo(cfg.generator, cfg.params), cfg.p); });
    return g;
}

Spacing spacing_of(const GridSpec& gs) {
    return gs.spacing == "geometric" ? Spacing::geometric(gs.ratio) : Spacing::uniform();
}

std::shared_ptr<const TimeGrid> base_grid(const ExperimentConfig& cfg, const Generator& g, std::size_t M) {
    if (g.infinite_horizon) {
        if (!cfg.grid.T_star) config_error("grid.T_star", "infinite-horizon generator needs grid.T_star");
        TruncatedHorizon th = truncate_horizon(g.tail_integrands, *cfg.grid.T_star, QuadratureConfig{});
        return std::make_shared<TimeGrid>(build_grid(th, M, spacing_of(cfg.grid)));
    }
    return std::make_shared<TimeGrid>(build_grid(cfg.grid.T, M, spacing_of(cfg.grid)));
}

struct Certificate {
    Partition partition;
    BoundM bound;
    double xi_moment = 0.0;
    double g00_moment = 0.0;
    std::optional<MajorantTrace> majorant;
    std::optional<Error> gate_error;
};

double xi_moment_on(const ExperimentConfig& cfg, const Generator& g, const PathEnsemble& ens) {
    BrownianValues bv(ens);
    std::vector<double> xi(ens.paths() * g.k);
    cfg.terminal.evaluate(bv, g.k, xi);
    return path_moment(ens.paths(), [&](std::size_t q) {
               double s = 0.0;
               for (std::size_t j = 0; j < g.k; ++j) s += xi[q * g.k + j] * xi[q * g.k + j];
               return std::pow(std::sqrt(s), cfg.p);
           }).mean;
}

/// Partition on the certificate grid and M on its last interval.
Certificate certify_partition(const ExperimentConfig& cfg, const Generator& g) {
    if (!g.desc.h4) config_error("generator", "generator " + cfg.generator + " carries no H4 descriptor");
    const H4& h = *g.desc.h4;
    const ConstantLedger L = make_ledger(cfg.p, cfg.ledger);
    auto cgrid = base_grid(cfg, g, cfg.certify.grid_M);
    Certificate c;
    c.partition = compute_partition(h.alpha, h.beta, h.rho.b, L, *cgrid);
    if (!cfg.certify.xi_moment || !cfg.certify.g00_moment) {
        auto sgrid = base_grid(cfg, g, cfg.grid.M);
        PathEnsemble ens = simulate_brownian(sgrid, cfg.ensemble.d, cfg.ensemble.P, cfg.ensemble.seed);
        c.xi_moment = cfg.certify.xi_moment.value_or(xi_moment_on(cfg, g, ens));
        c.g00_moment = cfg.certify.g00_moment.value_or(check_H5(g, ens, cfg.p).estimate);
    } else {
        c.xi_moment = *cfg.certify.xi_moment;
        c.g00_moment = *cfg.certify.g00_moment;
    }
    const IntervalBudget& last = c.partition.intervals.back();
    c.bound = constant_M(L, c.xi_moment, c.g00_moment, h.rho.a, last.alpha_hat, last.beta_hat, last.t_lo, last.t_hi);
    return c;
}

/// Majorant on the last interval, resolved on the nodes of `grid`; a failed
/// gate is kept on the certificate.
void attach_majorant(Certificate& c, const ExperimentConfig& cfg, const Generator& g, const TimeGrid& grid) {
    const IntervalBudget& last = c.partition.intervals.back();
    try {
        c.majorant = majorant_sequence(g.desc.h4->rho, c.bound.M, last.t_lo, last.t_hi, grid, cfg.certify.majorant);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::GateFailed) throw;
        c.gate_error = e;
    }
}

json partition_json(const Partition& part) {
    json iv = json::array();
    for (const auto& i : part.intervals)
        iv.push_back({{"t_lo", i.t_lo}, {"t_hi", i.t_hi}, {"b_integral", i.b_integral},
                      {"alpha_hat", i.alpha_hat}, {"beta_hat", i.beta_hat}});
    bool ok = true;
    for (const auto& i : part.intervals)
        ok = ok && i.b_integral <= part.b_budget * (1.0 + 1e-12) &&
             i.alpha_hat + i.beta_hat <= part.ab_budget * (1.0 + 1e-12);
    return {{"N", part.size()},       {"points", part.points},
            {"b_budget", part.b_budget}, {"ab_budget", part.ab_budget},
            {"total_b", part.total_b}, {"total_alpha_hat", part.total_alpha_hat},
            {"total_beta_hat", part.total_beta_hat}, {"budgets_ok", ok},
            {"intervals", iv}};
}

json majorant_json(const MajorantTrace& tr) {
    return {{"M", tr.M},
            {"t_lo", tr.t_lo},
            {"t_hi", tr.t_hi},
            {"gate_integral", tr.gate_integral},
            {"refined_nodes", tr.refined_nodes},
            {"n_stop", tr.n_stop},
            {"converged", tr.converged},
            {"monotone", tr.monotone},
            {"bounded_by_M", tr.bounded_by_M},
            {"phi_at_lo", tr.phi_at_lo}};
}

std::string majorant_csv(const MajorantTrace& tr, const std::string& hash) {
    Csv csv(hash, {"n", "t", "phi"});
    for (std::size_t n = 0; n < tr.phi.size(); ++n)
        for (std::size_t j = 0; j < tr.t.size(); ++j)
            csv.row({static_cast<double>(n), tr.t[j], tr.phi[n][j]});
    return csv.str();
}

Modulus modulus_family(const std::string& family, const std::vector<double>& prm, const std::string& field) {
    auto need = [&](std::size_t n) {
        if (prm.size() != n)
            config_error(field, family + " takes " + std::to_string(n) + " parameter" + (n == 1 ? "" : "s"));
    };
    Modulus m;
    checked(field, [&] {
        if (family == "linear") {
            need(1);
            m = linear_modulus(prm[0]);
        } else if (family == "power") {
            need(1);
            m = power_modulus(prm[0]);
        } else if (family == "xlogx") {
            need(2);
            m = xlogx(prm[0], prm[1]);
        } else if (family == "xloglog") {
            need(2);
            m = xloglog(prm[0], prm[1]);
        } else {
            config_error("family", "unknown modulus family " + family);
        }
    });
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        config_error("config", std::string("malformed JSON: ") + e.what());
    }
    ExperimentConfig c;
    Reader root(j, "");
    bool generator_p_given = false;
    if (auto r = root.child("generator")) {
        c.generator = r->text("name", c.generator);
        c.params.a = r->number("a", 0.0);
        c.params.b = r->number("b", 0.0);
        c.params.u = r->number("u", 0.0);
        c.params.v = r->number("v", 0.0);
        generator_p_given = r->has("p");
        c.params.p = r->number("p", 2.0);
        c.params.delta = r->number("delta", c.params.delta);
        c.params.k = r->count("k", 1);
        c.params.d = r->count("d", 1);
        r->finish();
    }
    if (auto r = root.child("terminal")) {
        std::string kind = r->text("kind", to_string(c.terminal.kind));
        c.terminal.kind = terminal_kind(kind, r->field("kind"));
        c.terminal.value = r->number("value", 1.0);
        r->finish();
    }
    c.p = root.number("p", c.p);
    if (!(c.p > 1.0)) config_error("p", "p must exceed 1");
    if (!generator_p_given) c.params.p = c.p;
    checked("generator.name", [&] { zoo(c.generator, c.params); });
    if (auto r = root.child("grid")) {
        c.grid.T = r->number("T", c.grid.T);
        c.grid.T_star = r->opt_number("T_star");
        c.grid.M = r->count("M", c.grid.M);
        c.grid.spacing = r->text("spacing", c.grid.spacing);
        c.grid.ratio = r->number("ratio", c.grid.ratio);
        c.grid.window_steps = r->count("window_steps", 0);
        c.grid.prefix_steps = r->count("prefix_steps", c.grid.prefix_steps);
        c.grid.window_t_lo = r->opt_number("window_t_lo");
        r->finish();
    }
    if (!(c.grid.T > 0.0)) config_error("grid.T", "T must be positive");
    if (c.grid.T_star && !(*c.grid.T_star > 0.0)) config_error("grid.T_star", "T_star must be positive");
    if (c.grid.M < 1) config_error("grid.M", "M must be at least 1");
    if (c.grid.spacing != "uniform" && c.grid.spacing != "geometric")
        config_error("grid.spacing", "spacing must be uniform or geometric");
    if (c.grid.window_steps > 0 && c.grid.prefix_steps < 1) config_error("grid.prefix_steps", "must be positive");
    if (auto r = root.child("ensemble")) {
        c.ensemble.d = r->count("d", c.ensemble.d);
        c.ensemble.P = r->count("P", c.ensemble.P);
        c.ensemble.seed = r->count("seed", c.ensemble.seed);
        r->finish();
    }
    if (c.ensemble.d < 1) config_error("ensemble.d", "d must be at least 1");
    if (c.ensemble.P < 2) config_error("ensemble.P", "P must be at least 2");
    if (auto r = root.child("ledger")) {
        c.ledger.m_p = r->opt_number("m_p");
        c.ledger.k_p = r->opt_number("k_p");
        c.ledger.bar_m_p = r->opt_number("bar_m_p");
        c.ledger.hat_m_p = r->opt_number("hat_m_p");
        c.ledger.tilde_m_p = r->opt_number("tilde_m_p");
        r->finish();
    }
    checked("ledger", [&] { make_ledger(c.p, c.ledger); });
    auto& s = c.solver;
    s.basis = RegressionBasis::polynomial(3, c.ensemble.d);
    if (auto r = root.child("solver")) {
        const std::string kind = r->text("basis", "polynomial");
        if (kind != "polynomial" && kind != "piecewise")
            config_error("solver.basis", "basis must be polynomial or piecewise");
        s.basis.kind = kind == "polynomial" ? RegressionBasis::Kind::Polynomial : RegressionBasis::Kind::Piecewise;
        s.basis.degree = r->count("degree", kind == "polynomial" ? 3 : 1);
        s.basis.bins = r->count("bins", 16);
        s.n_max = r->count("n_max", s.n_max);
        s.tol_sp = r->number("tol_sp", s.tol_sp);
        s.inner_iters = r->count("inner_iters", s.inner_iters);
        const std::string init = r->text("init", "zero");
        if (init != "zero" && init != "terminal") config_error("solver.init", "init must be zero or terminal");
        s.init = init == "zero" ? SolverOptions::Init::Zero : SolverOptions::Init::Terminal;
        s.project_driver = r->boolean("project_driver", false);
        s.t_floor = r->opt_number("t_floor");
        r->finish();
    }
    s.p = c.p;
    s.basis.d = c.ensemble.d;
    checked("solver", [&] { s.validate(); });
    if (auto r = root.child("certify")) {
        c.certify.grid_M = r->count("grid_M", c.certify.grid_M);
        c.certify.xi_moment = r->opt_number("xi_moment");
        c.certify.g00_moment = r->opt_number("g00_moment");
        c.certify.majorant.n_max = r->count("n_max", c.certify.majorant.n_max);
        c.certify.majorant.tol = r->number("tol", c.certify.majorant.tol);
        c.certify.majorant.refine_nodes = r->count("refine_nodes", c.certify.majorant.refine_nodes);
        r->finish();
    }
    if (c.certify.grid_M < 1) config_error("certify.grid_M", "grid_M must be at least 1");
    if (!(c.certify.majorant.tol > 0.0)) config_error("certify.tol", "tol must be positive");
    if (c.certify.majorant.refine_nodes < 2) config_error("certify.refine_nodes", "refine_nodes must be >= 2");
    if (auto r = root.child("check")) {
        c.check.alpha = r->opt_number("alpha");
        c.check.beta = r->opt_number("beta");
        if (r->has("rho")) {
            const std::string rho = r->text("rho", "");
            if (rho != "linear" && rho != "sqrt" && rho != "xlogx")
                config_error("check.rho", "rho must be linear, sqrt or xlogx");
            c.check.rho = rho;
        }
        c.check.rho_scale = r->number("rho_scale", 1.0);
        c.check.sampler.y_range = r->number("y_range", c.check.sampler.y_range);
        c.check.sampler.z_range = r->number("z_range", c.check.sampler.z_range);
        c.check.sampler.count = r->count("count", c.check.sampler.count);
        c.check.sampler.seed = r->count("seed", c.check.sampler.seed);
        r->finish();
    }
    if (c.check.alpha && *c.check.alpha < 0.0) config_error("check.alpha", "alpha must be nonnegative");
    if (c.check.beta && *c.check.beta < 0.0) config_error("check.beta", "beta must be nonnegative");
    if (!(c.check.rho_scale >= 0.0)) config_error("check.rho_scale", "rho_scale must be nonnegative");
    c.output_dir = root.text("output_dir", c.output_dir);
    root.text("config_hash", "");
    root.finish();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::Config, "cannot read config file " + path, "config");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string config_json(const ExperimentConfig& cfg, int indent) { return to_json(cfg).dump(indent); }

std::string config_file(const ExperimentConfig& cfg) {
    json j = to_json(cfg);
    j["config_hash"] = config_hash(cfg);
    return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
    json j = to_json(cfg);
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(j.dump()));
    return buf;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

RunOutput run_solve(const ExperimentConfig& cfg) {
    const Generator g = make_generator(cfg);
    if (cfg.ensemble.d != g.d) config_error("ensemble.d", "ensemble dimension must match the generator");
    const std::string hash = config_hash(cfg);

    std::shared_ptr<const TimeGrid> grid;
    std::optional<Certificate> cert;
    std::optional<double> window_lo = cfg.grid.window_t_lo;
    if (cfg.grid.window_steps > 0) {
        if (g.infinite_horizon) config_error("grid.window_steps", "window grids need a finite horizon");
        if (g.desc.h4) cert = certify_partition(cfg, g);
        if (!window_lo) {
            if (!cert) config_error("grid.window_t_lo", "no H4 descriptor to certify; give window_t_lo");
            window_lo = cert->partition.intervals.back().t_lo;
        }
        if (!(*window_lo > 0.0 && *window_lo < cfg.grid.T)) config_error("grid.window_t_lo", "must lie in (0, T)");
        grid = std::make_shared<TimeGrid>(
            build_window_grid(cfg.grid.T, *window_lo, cfg.grid.window_steps, cfg.grid.prefix_steps));
        if (cert && cert->partition.intervals.back().t_lo == *window_lo) attach_majorant(*cert, cfg, g, *grid);
    } else {
        grid = base_grid(cfg, g, cfg.grid.M);
    }

    PathEnsemble ens = simulate_brownian(grid, cfg.ensemble.d, cfg.ensemble.P, cfg.ensemble.seed);
    BrownianValues bv(ens);
    std::vector<double> xi(ens.paths() * g.k);
    checked("terminal", [&] { cfg.terminal.evaluate(bv, g.k, xi); });
    SolverOptions opt = cfg.solver;
    if (window_lo) opt.window_t_lo = *window_lo;
    const MajorantTrace* maj = nullptr;
    if (cert && cert->majorant) maj = &*cert->majorant;
    PicardResult res = picard_solve(xi, g, ens, bv, opt, maj);
    const SolutionEnsemble& sol = res.solution;
    const ConvergenceTrace& tr = res.trace;

    RunOutput out;
    const std::string& dir = cfg.output_dir;

    Csv sc(hash, {"point", "t", "component", "y_mean", "y_se", "z_rms"});
    double y_min = std::numeric_limits<double>::infinity(), y_max = -y_min, z_rms_max = 0.0;
    for (std::size_t i = 0; i < grid->size(); ++i) {
        for (std::size_t a = 0; a < g.k; ++a) {
            const MomentEstimate m = mean_y(sol, i, a);
            double zr = 0.0;
            if (i < grid->steps()) {
                zr = std::sqrt(path_moment(sol.paths(), [&](std::size_t q) {
                                   double s = 0.0;
                                   for (std::size_t c = 0; c < g.d; ++c) s += sol.z(i, q)[a * g.d + c] * sol.z(i, q)[a * g.d + c];
                                   return s;
                               }).mean);
            }
            z_rms_max = std::max(z_rms_max, zr);
            sc.row({static_cast<double>(i), (*grid)[i], static_cast<double>(a), m.mean, m.se, zr});
        }
        for (std::size_t q = 0; q < sol.paths(); ++q)
            for (std::size_t a = 0; a < g.k; ++a) {
                y_min = std::min(y_min, sol.y(i, q)[a]);
                y_max = std::max(y_max, sol.y(i, q)[a]);
            }
    }
    out.files.push_back(write_file(dir, "solve_solution.csv", sc.str()));

    Csv tc(hash, {"n", "sp_distance", "mp_distance", "window_moment", "window_moment_se"});
    for (const auto& st : tr.steps)
        tc.row({static_cast<double>(st.n), st.sp_distance, st.mp_distance, st.window_moment, st.window_moment_se});
    out.files.push_back(write_file(dir, "solve_trace.csv", tc.str()));

    bool dominated = true;
    if (maj) {
        Csv dc(hash, {"n", "moment", "se", "bound", "ok"});
        for (const auto& d : tr.domination) {
            dc.row({static_cast<double>(d.n), d.moment, d.se, d.bound, d.ok ? 1.0 : 0.0});
            dominated = dominated && d.ok;
        }
        out.files.push_back(write_file(dir, "solve_domination.csv", dc.str()));
    }

    std::vector<double> y0;
    for (std::size_t a = 0; a < g.k; ++a) y0.push_back(mean_y(sol, 0, a).mean);
    json s = {{"command", "solve"},
              {"config_hash", hash},
              {"generator", g.name},
              {"converged", tr.converged},
              {"converged_iterate", tr.converged_iterate},
              {"diverged", tr.diverged},
              {"iterations", tr.steps.size()},
              {"y0", y0},
              {"y0_se", mean_y(sol, 0, 0).se},
              {"y_min", y_min},
              {"y_max", y_max},
              {"z_rms_max", z_rms_max},
              {"sp_norm", empirical_sp_norm(sol, cfg.p)},
              {"mp_norm", empirical_mp_norm(sol, cfg.p)},
              {"beta2_dt_max", tr.beta2_dt_max},
              {"ridge_fits", tr.regression.ridge_fits},
              {"warnings", tr.warnings},
              {"grid_points", grid->size()},
              {"paths", sol.paths()}};
    if (window_lo) s["window_t_lo"] = *window_lo;
    if (maj) {
        s["majorant"] = majorant_json(*maj);
        s["dominated"] = dominated;
    }
    out.summary_json = dump(s);
    out.files.push_back(write_file(dir, "solve_summary.json", out.summary_json));
    out.files.push_back(write_file(dir, "config.json", config_file(cfg)));
    if (tr.diverged) {
        const double last = tr.steps.empty() ? 0.0 : tr.steps.back().sp_distance;
        fail(ErrorKind::Divergence, "Picard iteration diverged", "solver", last);
    }
    return out;
}

RunOutput run_certify(const ExperimentConfig& cfg) {
    const Generator g = make_generator(cfg);
    const std::string hash = config_hash(cfg);
    auto cgrid = base_grid(cfg, g, cfg.certify.grid_M);
    Certificate c = certify_partition(cfg, g);
    attach_majorant(c, cfg, g, *cgrid);
    RunOutput out;
    const IntervalBudget& last = c.partition.intervals.back();
    json s = {{"command", "certify"},
              {"config_hash", hash},
              {"generator", g.name},
              {"p", cfg.p},
              {"partition", partition_json(c.partition)},
              {"xi_moment", c.xi_moment},
              {"g00_moment", c.g00_moment},
              {"last_interval",
               {{"t_lo", last.t_lo},
                {"t_hi", last.t_hi},
                {"C_hat", c.bound.C_hat},
                {"a_integral", c.bound.a_integral},
                {"M", c.bound.M}}}};
    if (c.majorant) {
        s["majorant"] = majorant_json(*c.majorant);
        out.files.push_back(write_file(cfg.output_dir, "certify_majorant.csv", majorant_csv(*c.majorant, hash)));
    } else {
        s["majorant"] = {{"gate_failed", true}, {"gate_integral", c.gate_error->value().value_or(0.0)}};
    }
    out.summary_json = dump(s);
    out.files.insert(out.files.begin(), write_file(cfg.output_dir, "certify_partition.json", out.summary_json));
    out.files.push_back(write_file(cfg.output_dir, "config.json", config_file(cfg)));
    if (c.gate_error) throw *c.gate_error;
    return out;
}

RunOutput run_check(const ExperimentConfig& cfg) {
    const Generator g = make_generator(cfg);
    const std::string hash = config_hash(cfg);
    H4 desc;
    if (g.desc.h4) desc = *g.desc.h4;
    if (cfg.check.alpha) desc.alpha = [a = *cfg.check.alpha](double) { return a; };
    if (cfg.check.beta) desc.beta = [b = *cfg.check.beta](double) { return b; };
    if (cfg.check.rho) {
        const double sc = cfg.check.rho_scale;
        const std::string& r = *cfg.check.rho;
        auto w = [sc](double) { return sc; };
        if (r == "linear") desc.rho = scaled_modulus("linear", w, linear_modulus(1.0));
        else if (r == "sqrt") desc.rho = scaled_modulus("sqrt", w, power_modulus(0.5));
        else desc.rho = scaled_modulus("xlogx", w, xlogx(cfg.p, std::min(0.1, xlogx_delta_max(cfg.p))));
    }
    if (!desc.alpha || !desc.beta || !desc.rho.eval)
        config_error("check", "generator has no H4 descriptor; supply check.alpha, check.beta and check.rho");

    auto grid = base_grid(cfg, g, cfg.grid.M);
    HypothesisReport rep = check_H4_sampled(g, desc, cfg.p, cfg.check.sampler, *grid);
    PathEnsemble ens = simulate_brownian(grid, cfg.ensemble.d, cfg.ensemble.P, cfg.ensemble.seed);
    const H5Estimate h5 = check_H5(g, ens, cfg.p);

    json entries = json::array();
    for (const auto& e : rep.entries) {
        json je = {{"name", e.name}, {"status", to_string(e.status)}, {"samples", e.samples}, {"note", e.note}};
        json vals = json::object();
        for (const auto& [k, v] : e.values) vals[k] = v;
        je["values"] = vals;
        if (e.witness) {
            const Witness& w = *e.witness;
            je["witness"] = {{"t", w.t}, {"y1", w.y1}, {"y2", w.y2}, {"z1", w.z1}, {"z2", w.z2},
                             {"B", w.B}, {"lhs", w.lhs}, {"rhs", w.rhs}};
        }
        entries.push_back(je);
    }
    json s = {{"command", "check"},
              {"config_hash", hash},
              {"generator", g.name},
              {"p", cfg.p},
              {"all_pass", rep.all_pass()},
              {"entries", entries},
              {"H5",
               {{"estimate", h5.estimate},
                {"standard_error", h5.standard_error},
                {"half_a", h5.half_a},
                {"half_b", h5.half_b},
                {"stable", h5.stable},
                {"finite", h5.finite}}},
              {"present", g.desc.present()}};
    RunOutput out;
    out.summary_json = dump(s);
    out.files.push_back(write_file(cfg.output_dir, "check_report.json", out.summary_json));
    out.files.push_back(write_file(cfg.output_dir, "config.json", config_file(cfg)));
    return out;
}

RunOutput run_modulus(const ModulusRequest& req) {
    const Modulus m = modulus_family(req.family, req.params, "params");
    if (!(req.u0 > 0.0 && std::isfinite(req.u0))) config_error("u0", "u0 must be positive");
    if (req.points < 2) config_error("points", "points must be at least 2");
    json key = {{"family", req.family}, {"params", req.params}, {"action", req.action},
                {"r", req.r},           {"u0", req.u0},         {"points", req.points}};
    char hbuf[17];
    std::snprintf(hbuf, sizeof hbuf, "%016" PRIx64, fnv1a(key.dump()));
    const std::string hash = hbuf;
    json s = {{"command", "modulus"}, {"config_hash", hash}, {"request", key}, {"name", m.name}};
    RunOutput out;
    std::string csv_name;
    std::string csv;
    if (req.action == "diagnose") {
        const OsgoodReport r = osgood_diagnostic(m, req.u0);
        Csv c(hash, {"eps", "I"});
        for (const auto& pt : r.trace) c.row({pt.eps, pt.I});
        csv = c.str();
        csv_name = "modulus_diagnose.csv";
        s["classification"] = to_string(r.classification);
        s["heuristic"] = r.heuristic;
        s["registry"] = r.registry ? json(to_string(*r.registry)) : json(nullptr);
        s["decay_ratio"] = r.decay_ratio;
        s["tail_estimate"] = r.tail_estimate;
        s["I_last"] = r.trace.empty() ? 0.0 : r.trace.back().I;
    } else if (req.action == "concavify") {
        ConcaveMajorant cm;
        checked("params", [&] { cm = concavify(m, req.u0, req.points); });
        Csv c(hash, {"u", "rho", "majorant"});
        for (double u : cm.grid) c.row({u, m(u), cm.modulus(u)});
        csv = c.str();
        csv_name = "modulus_concavify.csv";
        s["hull_vertices"] = cm.hull.size();
    } else if (req.action == "transform") {
        if (!(req.r > 0.0 && std::isfinite(req.r))) config_error("r", "r must be positive");
        const Modulus t = power_transform(m, req.r);
        Csv c(hash, {"u", "rho", "transformed"});
        for (std::size_t i = 0; i < req.points; ++i) {
            const double u = req.u0 * static_cast<double>(i) / static_cast<double>(req.points - 1);
            c.row({u, m(u), t(u)});
        }
        csv = c.str();
        csv_name = "modulus_transform.csv";
        s["transformed_name"] = t.name;
    } else {
        config_error("action", "action must be diagnose, concavify or transform");
    }
    out.files.push_back(write_file(req.output_dir, csv_name, csv));
    out.summary_json = dump(s);
    out.files.push_back(write_file(req.output_dir, "modulus_summary.json", out.summary_json));
    return out;
}

std::string zoo_list_csv() {
    std::string s = "name,params,formula\n";
    for (const auto& e : zoo_list()) s += e.name + ",\"" + e.params + "\",\"" + e.formula + "\"\n";
    return s;
}

std::string error_json(const std::exception& e) {
    json j;
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        j["error"] = to_string(err->kind());
        j["field"] = err->field();
        j["value"] = err->value() ? json(*err->value()) : json(nullptr);
    } else {
        j["error"] = "internal";
        j["field"] = "";
        j["value"] = nullptr;
    }
    j["message"] = e.what();
    j["exit_code"] = exit_code_for(e);
    return j.dump();
}

int exit_code_for(const std::exception& e) noexcept {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->kind()) {
            case ErrorKind::Config:
            case ErrorKind::InvalidArgument:
            case ErrorKind::InvalidModulus:
            case ErrorKind::Io: return 2;
            case ErrorKind::HorizonRejected:
            case ErrorKind::CertificationFailed:
            case ErrorKind::GateFailed:
            case ErrorKind::Divergence: return 1;
        }
    }
    return 1;
}

}  // namespace bsdecert
