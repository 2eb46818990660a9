// Batch front door: loads a problem JSON, dispatches one engine operation,
// and emits a deterministic result payload (JSON or a per-scenario CSV table)
// with reproducibility metadata. One run per process; exit codes: 0 success,
// 2 validation, 3 budget exhaustion, 4 capability.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gexpect/gexpect.hpp"

namespace {

using json = nlohmann::json;
using namespace gexpect;

using OverrideMap = std::map<std::string, std::string>;

OverrideMap parse_override_list(const std::vector<std::string>& kvs) {
    OverrideMap out;
    for (const auto& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw input_error("override must look like key=value, got: " + kv);
        out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw input_error(what + ": cannot parse '" + s + "' as a number");
    }
    if (pos != s.size()) throw input_error(what + ": trailing characters in '" + s + "'");
    return v;
}

std::size_t parse_size(const std::string& s, const std::string& what) {
    const double v = parse_double(s, what);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e15)
        throw input_error(what + ": '" + s + "' is not a nonnegative integer");
    return static_cast<std::size_t>(v);
}

struct Ctx {
    Problem problem;
    OverrideMap ov;
    std::uint64_t seed = 0;
    // filled by handlers that support --format csv
    std::vector<std::string> csv_header;
    std::vector<std::vector<std::string>> csv_rows;

    bool has(const std::string& k) const { return ov.count(k) > 0; }
    double num(const std::string& k, double def) const {
        auto it = ov.find(k);
        return it == ov.end() ? def : parse_double(it->second, "override " + k);
    }
    std::size_t size(const std::string& k, std::size_t def) const {
        auto it = ov.find(k);
        return it == ov.end() ? def : parse_size(it->second, "override " + k);
    }
    std::string str(const std::string& k, const std::string& def) const {
        auto it = ov.find(k);
        return it == ov.end() ? def : it->second;
    }

    std::size_t n_paths() const {
        return size("paths", static_cast<std::size_t>(problem.mc.paths));
    }

    GNormalSpec make_spec() const {
        QuadratureMode mode = QuadratureMode::gauss_hermite;
        const std::string q = str("quadrature", "gh");
        if (q == "pl_exact")
            mode = QuadratureMode::pl_exact;
        else if (q != "gh")
            throw input_error("override quadrature: must be gh or pl_exact, got '" + q + "'");
        return GNormalSpec::create(problem.sigma_set, size("substeps", 8), size("quad_nodes", 21),
                                   mode);
    }

    DpConfig make_dpcfg() const {
        DpConfig cfg;
        cfg.grid_points = size("grid_points", cfg.grid_points);
        cfg.grid_points_2d = size("grid_points_2d", cfg.grid_points_2d);
        cfg.width_sigmas = num("width_sigmas", cfg.width_sigmas);
        cfg.with_error_estimate = size("error_estimate", 1) != 0;
        return cfg;
    }

    ScenarioFamily make_family(const std::vector<double>& times) const {
        const std::string fam = str("family", "constant");
        const std::size_t refinement = size("refinement", 1);
        if (fam == "constant") return constant_family(problem.sigma_set, times, refinement);
        if (fam == "product")
            return product_family(problem.sigma_set, times, refinement,
                                  size("family_budget", 256), seed);
        throw input_error("override family: must be constant or product, got '" + fam + "'");
    }

    const std::vector<double>& need_times() const {
        if (problem.times.empty()) throw input_error("this command needs \"times\" in the problem");
        return problem.times;
    }

    CylinderFunctional need_payoff_functional() const {
        if (!problem.payoff) throw input_error("this command needs \"payoff\" in the problem");
        return CylinderFunctional::from_spec(need_times(), *problem.payoff,
                                             size("allow_flagged", 0) != 0);
    }
};

const std::set<std::string> kCommonKeys = {
    "grid_points", "grid_points_2d", "width_sigmas", "substeps",      "quad_nodes",
    "quadrature",  "error_estimate", "paths",        "family",        "refinement",
    "family_budget", "allow_flagged"};

void check_known_keys(const OverrideMap& ov, const std::set<std::string>& extra) {
    for (const auto& [k, v] : ov)
        if (!kCommonKeys.count(k) && !extra.count(k))
            throw input_error("unknown override key: " + k);
}

std::string scenario_label(const VolatilityScenario& sc) {
    if (sc.feedback) return "feedback";
    std::string out;
    for (std::size_t i = 0; i < sc.gamma_index.size(); ++i) {
        if (i) out += '|';
        out += std::to_string(sc.gamma_index[i]);
    }
    return out;
}

SymMatrix parse_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::string row;
    std::istringstream rs(text);
    while (std::getline(rs, row, ';')) {
        std::vector<double> r;
        std::string cell;
        std::istringstream cs(row);
        while (std::getline(cs, cell, ',')) r.push_back(parse_double(cell, "override matrix"));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw input_error("override matrix: empty");
    return SymMatrix::from_rows(rows);
}

std::vector<double> parse_vector(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::string cell;
    std::istringstream cs(text);
    while (std::getline(cs, cell, ',')) out.push_back(parse_double(cell, what));
    if (out.empty()) throw input_error(what + ": empty");
    return out;
}

// evaluates the problem payoff on a sampled path by reading the nodes at the
// problem times (scenario grids always contain them)
double payoff_on_sample(const CylinderFunctional& f, const PathSample& ps) {
    const std::size_t d = ps.dim;
    std::vector<double> x(f.times.size() * d);
    for (std::size_t i = 0; i < f.times.size(); ++i) {
        bool found = false;
        for (std::size_t k = 0; k < ps.times.size(); ++k) {
            if (std::fabs(ps.times[k] - f.times[i]) <= 1e-9) {
                for (std::size_t j = 0; j < d; ++j) x[i * d + j] = ps.at(k, j);
                found = true;
                break;
            }
        }
        if (!found)
            throw input_error("scenario grid does not contain time " +
                              std::to_string(f.times[i]));
    }
    return f.payoff(x);
}

// the registered built-in path functional plus the payoff-at-times route
PathFunctional make_path_functional(const Ctx& ctx) {
    const std::string name = ctx.str("functional", ctx.problem.payoff ? "payoff" : "capped_sup_abs");
    if (name == "capped_sup_abs") {
        return PathFunctional{
            "capped_sup_abs", 1.0, [](const DiscretePath& p) {
                double worst = 0.0;
                for (std::size_t k = 0; k < p.nodes(); ++k) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < p.dim; ++j) acc += p.node(k, j) * p.node(k, j);
                    worst = std::max(worst, acc);
                }
                return std::min(std::sqrt(worst), 1.0);
            }};
    }
    if (name == "payoff") {
        if (!ctx.problem.payoff)
            throw input_error("functional=payoff needs \"payoff\" in the problem");
        if (!ctx.has("bound"))
            throw input_error("a payoff-based path functional needs an explicit bound "
                              "(override bound=M)");
        const double bound = ctx.num("bound", 0.0);
        auto f = ctx.need_payoff_functional();
        const std::size_t d = f.dim;
        auto times = f.times;
        return PathFunctional{
            "payoff(" + f.label + ")", bound, [f, times, d](const DiscretePath& p) {
                std::vector<double> x(times.size() * d);
                for (std::size_t i = 0; i < times.size(); ++i)
                    p.value_at(times[i], std::span<double>(x.data() + i * d, d));
                return f.payoff(x);
            }};
    }
    throw input_error("unknown path functional '" + name + "' (built-ins: capped_sup_abs)");
}

json mc_row(const McResult& r, const std::string& label) {
    json row;
    row["estimate"] = r.estimate;
    row["label"] = label;
    row["std_error"] = r.std_error;
    return row;
}

// ---------------------------------------------------------------------------
// command handlers
// ---------------------------------------------------------------------------

json run_g_eval(Ctx& ctx) {
    check_known_keys(ctx.ov, {"matrix"});
    if (!ctx.has("matrix"))
        throw input_error("g-eval needs the test matrix (override matrix=\"a11,a12;a21,a22\")");
    const SymMatrix a = parse_matrix(ctx.ov.at("matrix"));
    GFunction g(ctx.problem.sigma_set);
    const GEval r = g(a);
    json out;
    out["argmax"] = r.argmax;
    out["tolerance"] = 0.0; // exact maximum over a finite set
    out["value"] = r.value;
    return out;
}

json run_moment(Ctx& ctx) {
    check_known_keys(ctx.ov, {"p", "direction"});
    const double p = ctx.num("p", ctx.problem.p.value_or(2.0));
    std::vector<double> a(ctx.problem.sigma_set.dimension(), 0.0);
    a[0] = 1.0;
    if (ctx.has("direction")) a = parse_vector(ctx.ov.at("direction"), "override direction");
    const GNormalSpec spec = ctx.make_spec();
    const double analytic = abs_moment(spec, a, p);
    const double quad = abs_moment_quadrature(spec, a, p);
    json out;
    out["analytic"] = analytic;
    out["direction"] = a;
    out["p"] = p;
    out["quadrature"] = quad;
    out["rel_gap"] = std::fabs(quad - analytic) / std::max(1.0, std::fabs(analytic));
    return out;
}

json run_expect(Ctx& ctx) {
    check_known_keys(ctx.ov, {});
    const CylinderFunctional f = ctx.need_payoff_functional();
    const DpResult r = cylinder_expectation(ctx.make_spec(), f, ctx.make_dpcfg());
    json out;
    out["error_estimate"] = r.error_estimate;
    out["payoff"] = f.label;
    out["times"] = f.times;
    out["value"] = r.value;
    return out;
}

json run_scenario_sup(Ctx& ctx) {
    check_known_keys(ctx.ov, {});
    const CylinderFunctional f = ctx.need_payoff_functional();
    const GNormalSpec spec = ctx.make_spec();
    const ScenarioFamily fam = ctx.make_family(f.times);
    std::vector<double> values;
    json rows = json::array();
    ctx.csv_header = {"scenario", "label", "estimate", "std_error"};
    std::vector<McResult> results;
    for (std::size_t s = 0; s < fam.scenarios.size(); ++s) {
        const McResult r = scenario_expectation(f, fam.scenarios[s], spec, ctx.n_paths(),
                                                detail::mix_seed(ctx.seed, s));
        results.push_back(r);
        values.push_back(r.estimate);
        const std::string label = scenario_label(fam.scenarios[s]);
        rows.push_back(mc_row(r, label));
        ctx.csv_rows.push_back({std::to_string(s), label, format_value(r.estimate),
                                format_value(r.std_error)});
    }
    const ScenarioSup sup = scenario_sup(fam, values);
    json out;
    out["argmax"] = sup.argmax;
    out["family"] = fam.label;
    out["n_paths"] = ctx.n_paths();
    out["per_scenario"] = rows;
    out["sup"] = sup.value;
    out["sup_std_error"] = results[sup.argmax].std_error;
    return out;
}

json run_gap(Ctx& ctx) {
    check_known_keys(ctx.ov, {});
    const CylinderFunctional f = ctx.need_payoff_functional();
    const GNormalSpec spec = ctx.make_spec();
    const ScenarioFamily fam = ctx.make_family(f.times);
    const RepresentationGapReport r =
        representation_gap(f, fam, spec, ctx.n_paths(), ctx.seed, ctx.make_dpcfg());
    json rows = json::array();
    ctx.csv_header = {"scenario", "label", "estimate", "std_error"};
    for (std::size_t s = 0; s < r.per_scenario.size(); ++s) {
        const std::string label = scenario_label(fam.scenarios[s]);
        rows.push_back(mc_row(r.per_scenario[s], label));
        ctx.csv_rows.push_back({std::to_string(s), label,
                                format_value(r.per_scenario[s].estimate),
                                format_value(r.per_scenario[s].std_error)});
    }
    json out;
    out["argmax"] = r.argmax;
    out["dp_error_estimate"] = r.dp_error_estimate;
    out["dp_value"] = r.dp_value;
    out["family"] = fam.label;
    out["gap"] = r.gap;
    out["max_mc"] = r.max_mc;
    out["max_mc_std_error"] = r.max_mc_std_error;
    out["n_paths"] = ctx.n_paths();
    out["per_scenario"] = rows;
    out["tolerance"] = r.tolerance;
    return out;
}

json run_capacity(Ctx& ctx) {
    check_known_keys(ctx.ov, {"level"});
    if (!ctx.has("level"))
        throw input_error("capacity needs the event level (override level=L tests payoff > L)");
    const double level = ctx.num("level", 0.0);
    const CylinderFunctional f = ctx.need_payoff_functional();
    const GNormalSpec spec = ctx.make_spec();
    const ScenarioFamily fam = ctx.make_family(f.times);
    const CapacityReport r = capacity_estimate(
        [&f, level](const PathSample& ps) { return payoff_on_sample(f, ps) > level; }, fam, spec,
        ctx.n_paths(), ctx.seed);
    json rows = json::array();
    ctx.csv_header = {"scenario", "label", "p_hat", "std_error"};
    for (std::size_t s = 0; s < r.per_scenario.size(); ++s) {
        const std::string label = scenario_label(fam.scenarios[s]);
        json row;
        row["label"] = label;
        row["p_hat"] = r.per_scenario[s].p_hat;
        row["std_error"] = r.per_scenario[s].std_error;
        rows.push_back(row);
        ctx.csv_rows.push_back({std::to_string(s), label, format_value(r.per_scenario[s].p_hat),
                                format_value(r.per_scenario[s].std_error)});
    }
    json out;
    out["argmax"] = r.argmax;
    out["family"] = fam.label;
    out["level"] = level;
    out["n_paths"] = r.n_paths;
    out["per_scenario"] = rows;
    out["std_error"] = r.per_scenario[r.argmax].std_error;
    out["value"] = r.value;
    return out;
}

json run_norm(Ctx& ctx) {
    check_known_keys(ctx.ov, {"p"});
    const double p = ctx.num("p", ctx.problem.p.value_or(1.0));
    const CylinderFunctional f = ctx.need_payoff_functional();
    const GNormalSpec spec = ctx.make_spec();
    const ScenarioFamily fam = ctx.make_family(f.times);
    const LpNormResult r = lp_norm(f, fam, spec, p, ctx.n_paths(), ctx.seed);
    json out;
    out["argmax"] = r.argmax;
    out["is_distance"] = r.is_distance;
    out["n_paths"] = ctx.n_paths();
    out["p"] = p;
    out["raw_sup"] = r.raw_sup;
    out["std_error"] = r.std_error;
    out["value"] = r.value;
    return out;
}

json run_mollify(Ctx& ctx) {
    check_known_keys(ctx.ov, {"path", "slope", "candidates", "functional", "bound"});
    if (!ctx.has("path"))
        throw input_error("mollify needs a query path (override path=file.csv)");
    const DiscretePath omega = path_from_csv(read_text_file(ctx.ov.at("path")));
    if (omega.dim != ctx.problem.sigma_set.dimension())
        throw input_error("query path dimension does not match the covariance set");
    const double slope = ctx.num("slope", 1.0);
    const std::size_t per_scenario = ctx.size("candidates", 16);
    const PathFunctional x = make_path_functional(ctx);
    const GNormalSpec spec = ctx.make_spec();

    std::vector<DiscretePath> candidates;
    const ScenarioFamily fam = ctx.make_family({omega.horizon});
    for (std::size_t s = 0; s < fam.scenarios.size(); ++s) {
        const VolatilityScenario fine =
            detail::refine_scenario_to_grid(fam.scenarios[s], omega.times);
        for (auto& ps :
             induce_measure(fine, spec, per_scenario, detail::mix_seed(ctx.seed, s)))
            candidates.push_back(DiscretePath::from_sample(ps));
    }
    for (std::size_t m = 1; m < omega.nodes() - 1; m *= 2)
        candidates.push_back(pl_project(omega, m, omega.horizon).path);

    const MollifyValue r = lip_mollify(x, slope, candidates, omega);
    json out;
    out["argmin"] = r.argmin;
    out["candidates"] = candidates.size();
    out["functional"] = x.name;
    out["query_optimal"] = r.query_optimal;
    out["slope"] = slope;
    out["tolerance"] = 0.0; // exact minimum over a finite set
    out["value"] = r.value;
    return out;
}

json run_approx_pipeline(Ctx& ctx) {
    check_known_keys(ctx.ov, {"eps", "functional", "bound", "horizon", "path_steps",
                              "pipeline_paths", "candidate_budget", "radius_max"});
    if (!ctx.has("eps")) throw input_error("approx-pipeline needs a target (override eps=...)");
    const double eps = ctx.num("eps", 0.0);
    const PathFunctional x = make_path_functional(ctx);
    const GNormalSpec spec = ctx.make_spec();

    PipelineConfig pc;
    pc.horizon = ctx.num("horizon", ctx.problem.times.empty() ? 1.0 : ctx.problem.times.back());
    pc.path_steps = ctx.size("path_steps", pc.path_steps);
    pc.n_paths = ctx.size("pipeline_paths", pc.n_paths);
    pc.candidate_budget = ctx.size("candidate_budget", pc.candidate_budget);
    pc.radius_max = ctx.num("radius_max", pc.radius_max);
    pc.seed = ctx.seed;
    const ScenarioFamily fam = ctx.make_family({pc.horizon});

    const PipelineResult r = lip_approx_pipeline(x, eps, fam, spec, pc);
    json stages = json::array();
    for (const auto& st : r.stages) {
        json row;
        row["achieved"] = st.achieved;
        row["budget"] = st.budget;
        row["met"] = st.met;
        row["name"] = st.name;
        stages.push_back(row);
    }
    json out;
    out["certified_bound"] = r.certified_bound;
    out["eps"] = r.eps;
    out["estimate"] = r.estimate;
    out["functional"] = x.name;
    out["grid_times"] = r.grid_times;
    out["mu"] = r.mu;
    out["n0"] = r.n0;
    out["radius"] = r.radius;
    out["stages"] = stages;
    out["std_error"] = r.std_error;
    out["theta"] = r.theta;
    out["y_equals_x_on_samples"] = r.y_equals_x_on_samples;
    return out;
}

json run_check_axioms(Ctx& ctx) {
    check_known_keys(ctx.ov, {"pairs"});
    const std::size_t pairs = ctx.size("pairs", 50);
    const CovarianceSet& cov = ctx.problem.sigma_set;
    const std::size_t d = cov.dimension();

    // G-function axioms on random symmetric pairs; every second pair is
    // PSD-dominated so monotonicity gets exercised
    std::mt19937_64 rng(ctx.seed);
    std::uniform_real_distribution<double> entry(-2.0, 2.0);
    auto random_sym = [&]() {
        std::vector<std::vector<double>> rows(d, std::vector<double>(d, 0.0));
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) rows[i][j] = rows[j][i] = entry(rng);
        return SymMatrix::from_rows(rows);
    };
    std::vector<std::pair<SymMatrix, SymMatrix>> samples;
    for (std::size_t i = 0; i < pairs; ++i) {
        SymMatrix b = random_sym();
        if (i % 2 == 0) {
            std::vector<double> v(d);
            for (auto& u : v) u = entry(rng);
            samples.emplace_back(b + SymMatrix::outer(v), b);
        } else {
            samples.emplace_back(random_sym(), b);
        }
    }
    const GAxiomReport g = g_axiom_check(GFunction(cov), samples);

    // upper-expectation axioms through the DP, at a reduced resolution (they
    // hold structurally at any configuration)
    DpConfig cfg = ctx.make_dpcfg();
    cfg.grid_points = ctx.size("grid_points", 201);
    cfg.with_error_estimate = false;
    const GNormalSpec spec =
        GNormalSpec::create(cov, ctx.size("substeps", 2), ctx.size("quad_nodes", 11));
    const ExpectationAxiomReport e = expectation_axiom_check(spec, pairs, ctx.seed, cfg);

    const double tol = 1e-8;
    const double worst =
        std::max({g.max_subadditivity_violation, g.max_homogeneity_violation,
                  g.max_monotonicity_violation, e.max_monotonicity_violation,
                  e.max_constant_violation, e.max_subadditivity_violation,
                  e.max_homogeneity_violation});
    json out;
    out["expectation_axioms"] = {{"constant", e.max_constant_violation},
                                 {"homogeneity", e.max_homogeneity_violation},
                                 {"monotonicity", e.max_monotonicity_violation},
                                 {"pairs_checked", e.pairs_checked},
                                 {"subadditivity", e.max_subadditivity_violation}};
    out["g_axioms"] = {{"homogeneity", g.max_homogeneity_violation},
                       {"monotone_pairs_checked", g.monotone_pairs_checked},
                       {"monotonicity", g.max_monotonicity_violation},
                       {"pairs_checked", g.pairs_checked},
                       {"subadditivity", g.max_subadditivity_violation}};
    out["max_violation"] = worst;
    out["pairs"] = pairs;
    out["pass"] = worst <= tol;
    out["tolerance"] = tol;
    return out;
}

json run_check_scaling(Ctx& ctx) {
    check_known_keys(ctx.ov, {"a", "b"});
    const double a = ctx.num("a", 1.0);
    const double b = ctx.num("b", 1.0);
    std::vector<FunctionalSpec> phis;
    if (ctx.problem.payoff) {
        phis.push_back(*ctx.problem.payoff);
    } else {
        for (const char* s : {"x1^2", "x1^4", "abs(x1)", "max(x1, 0)"})
            phis.push_back(parse_functional(s, 1, 1));
    }
    const ScalingReport r = scaling_identity_check(ctx.make_spec(), a, b, phis, ctx.make_dpcfg());
    json cases = json::array();
    for (const auto& c : r.cases) {
        json row;
        row["abs_diff"] = c.abs_diff;
        row["lhs"] = c.lhs;
        row["payoff"] = c.payoff;
        row["rhs"] = c.rhs;
        row["rhs_error_estimate"] = c.rhs_error_estimate;
        cases.push_back(row);
    }
    json out;
    out["a"] = r.a;
    out["b"] = r.b;
    out["cases"] = cases;
    out["max_abs_diff"] = r.max_abs_diff;
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical engine for sublinear expectations of Brownian functionals"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string problem_file, output_file, format = "json";
    std::vector<std::string> override_kvs;
    std::int64_t seed_value = 0;
    app.add_option("--problem", problem_file, "problem JSON file");
    app.add_option("--override", override_kvs,
                   "key=value configuration override (repeatable)");
    CLI::Option* seed_opt = app.add_option("--seed", seed_value, "RNG seed (default 0)");
    app.add_option("--output", output_file, "write the payload here (atomic temp+rename)");
    app.add_option("--format", format, "payload format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));

    using Handler = json (*)(Ctx&);
    const std::vector<std::pair<std::string, Handler>> commands = {
        {"g-eval", run_g_eval},
        {"moment", run_moment},
        {"expect", run_expect},
        {"scenario-sup", run_scenario_sup},
        {"gap", run_gap},
        {"capacity", run_capacity},
        {"norm", run_norm},
        {"mollify", run_mollify},
        {"approx-pipeline", run_approx_pipeline},
        {"check-axioms", run_check_axioms},
        {"check-scaling", run_check_scaling},
    };
    for (const auto& [name, fn] : commands) app.add_subcommand(name, "");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().at(0)->get_name();
    try {
        if (problem_file.empty()) throw input_error("--problem is required");
        Problem problem = load_problem(problem_file);
        OverrideMap ov = parse_override_list(override_kvs);

        std::uint64_t seed = 0;
        if (seed_opt->count() > 0) {
            if (seed_value < 0) throw input_error("--seed must be nonnegative");
            seed = static_cast<std::uint64_t>(seed_value);
        } else if (problem.mc.seed) {
            seed = *problem.mc.seed;
        } else {
            std::cerr << "notice: seed not specified; defaulting to 0\n";
        }

        json effective;
        effective["command"] = command;
        effective["format"] = format;
        effective["overrides"] = ov;
        effective["problem"] = problem.raw;
        effective["seed"] = seed;

        Ctx ctx{std::move(problem), std::move(ov), seed, {}, {}};
        json result;
        for (const auto& [name, fn] : commands)
            if (name == command) result = fn(ctx);

        json meta = result_meta(command, effective, seed);
        meta["tolerances"] = {{"division_guard", 1e-12},
                              {"mass_leak", kMassLeakTol},
                              {"psd_min_eigenvalue", -1e-10},
                              {"symmetry", 1e-12}};

        std::string payload;
        if (format == "csv") {
            if (ctx.csv_rows.empty())
                throw input_error("csv format is only available for per-scenario breakdown "
                                  "commands: scenario-sup, gap, capacity");
            std::vector<std::string> header = {"command", "config_hash", "seed", "version"};
            header.insert(header.end(), ctx.csv_header.begin(), ctx.csv_header.end());
            payload = csv_row(header);
            const std::string hash = meta["config_hash"].get<std::string>();
            for (const auto& row : ctx.csv_rows) {
                std::vector<std::string> full = {command, hash, std::to_string(seed),
                                                 kSchemaVersion};
                full.insert(full.end(), row.begin(), row.end());
                payload += csv_row(full);
            }
        } else {
            json envelope;
            envelope["meta"] = meta;
            envelope["result"] = result;
            payload = envelope.dump(2) + "\n";
        }

        if (output_file.empty())
            std::cout << payload;
        else
            atomic_write(output_file, payload);
        return 0;
    } catch (const budget_error& e) {
        std::cerr << "budget error: " << e.what() << " (achieved " << e.achieved() << ")\n";
        return 3;
    } catch (const capability_error& e) {
        std::cerr << "capability error: " << e.what() << "\n";
        return 4;
    } catch (const input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const evaluation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
