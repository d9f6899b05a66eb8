// Benchmark and checking harness: generate or load problems, run the
// structured linear solver or the full QP solver cold/warm, sweep problem
// and solver parameters, and emit machine-readable results.

#include <cyqlone/dense_oracle.hpp>
#include <cyqlone/kkt_solver.hpp>
#include <cyqlone/ocp.hpp>
#include <cyqlone/qpalm.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace {

using namespace cyqlone;
using batla::index_t;
using batla::real_t;
using ocp::OCPProblem;
using ocp::Solution;
using ocp::Vec;
using json = nlohmann::json;

struct BenchConfig {
    // problem source: mass-spring parameters, a JSON file, or a random seed
    index_t masses  = 0; ///< 0 = not a mass-spring problem
    std::string problem_path;
    index_t horizon = 8;
    index_t nx = 4, nu = 2, ny = 2; ///< random-problem dimensions
    std::uint64_t seed = 1;
    // solver
    std::string solver = "cyqpalm"; ///< cyqlone-linear | cyqpalm | dense-oracle
    index_t partitions = 4;
    index_t vlen       = 4;
    index_t workers    = 1;
    std::string tail   = "cr1";
    bool warm          = false;
    bool no_updates    = false;
    index_t instances  = 1;
    index_t repetitions = 1;
    real_t tol         = 1e-8;
    index_t max_iter   = 50;
    std::string format = "csv";
    std::string out;
};

kkt::Tail tail_of(const std::string &s) {
    if (s == "cr1")
        return kkt::Tail::cr1;
    if (s == "pcr")
        return kkt::Tail::pcr;
    if (s == "pcg")
        return kkt::Tail::pcg;
    throw CLI::ValidationError("--tail", "unknown tail strategy " + s);
}

struct Timings {
    double total = 0, riccati = 0, schur = 0, cr = 0, tail = 0;
    double per_iteration = 0;
};

struct BenchRecord {
    json config;
    index_t instance = 0, repetition = 0;
    std::string status;
    Timings time;
    index_t outer = 0, inner = 0, line_search = 0;
    index_t factorizations = 0, factor_updates = 0;
    real_t primal = 0, dual = 0, complementarity = 0, objective = 0;
    kkt::FlopModel model;
};

json config_json(const BenchConfig &c) {
    json j;
    j["problem"]["masses"]  = c.masses;
    j["problem"]["path"]    = c.problem_path;
    j["problem"]["horizon"] = c.horizon;
    j["problem"]["nx"]      = c.nx;
    j["problem"]["nu"]      = c.nu;
    j["problem"]["ny"]      = c.ny;
    j["problem"]["seed"]    = c.seed;
    j["solver"]["name"]       = c.solver;
    j["solver"]["partitions"] = c.partitions;
    j["solver"]["vlen"]       = c.vlen;
    j["solver"]["workers"]    = c.workers;
    j["solver"]["tail"]       = c.tail;
    j["solver"]["warm"]       = c.warm;
    j["solver"]["updates"]    = !c.no_updates;
    j["solver"]["tol"]        = c.tol;
    j["solver"]["max_iter"]   = c.max_iter;
    j["run"]["instances"]     = c.instances;
    j["run"]["repetitions"]   = c.repetitions;
    return j;
}

void flatten(const json &j, const std::string &prefix,
             std::vector<std::pair<std::string, json>> &out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten(it.value(), prefix.empty() ? it.key()
                                               : prefix + "." + it.key(),
                    out);
    } else {
        out.emplace_back(prefix, j);
    }
}

OCPProblem make_problem(const BenchConfig &c, index_t instance) {
    if (!c.problem_path.empty()) {
        OCPProblem p = ocp::load_json(c.problem_path);
        if (!p.E.empty())
            p = ocp::normalize_E(p);
        return p;
    }
    if (c.masses > 0) {
        ocp::MassSpringConfig ms;
        ms.masses  = c.masses;
        ms.horizon = c.horizon;
        ms.seed    = c.seed;
        OCPProblem p = ocp::mass_spring_generate(ms);
        p.x_init     = ocp::mass_spring_initial_state(ms, instance);
        return p;
    }
    return ocp::random_ocp(c.horizon, c.nx, c.nu, c.ny,
                           c.seed + static_cast<std::uint64_t>(instance));
}

qpalm::QPALMSettings solver_settings(const BenchConfig &c) {
    qpalm::QPALMSettings s;
    s.eps_abs     = c.tol;
    s.max_outer   = c.max_iter;
    s.use_updates = !c.no_updates;
    s.kkt.P       = c.partitions;
    s.kkt.vlen    = c.vlen;
    s.kkt.workers = c.workers;
    s.kkt.tail    = tail_of(c.tail);
    return s;
}

Solution shift_by_one(const OCPProblem &p, const Solution &prev) {
    Solution w = prev;
    for (index_t j = 0; j + 1 < p.N; ++j)
        w.u[static_cast<std::size_t>(j)] =
            prev.u[static_cast<std::size_t>(j + 1)];
    for (index_t j = 0; j <= p.N; ++j)
        w.x[static_cast<std::size_t>(j)] =
            prev.x[static_cast<std::size_t>(std::min(j + 1, p.N))];
    for (index_t j = 0; j + 1 < p.N; ++j) {
        w.y[static_cast<std::size_t>(j)] =
            prev.y[static_cast<std::size_t>(j + 1)];
        w.lam[static_cast<std::size_t>(j)] =
            prev.lam[static_cast<std::size_t>(j + 1)];
    }
    // the stage-(N-1) multiplier block keeps its value (repeated last stage);
    // the terminal y is already aligned
    return w;
}

Solution run_solver(const BenchConfig &c, const OCPProblem &p,
                    const Solution *warm, Timings &t) {
    auto t0 = std::chrono::steady_clock::now();
    Solution sol;
    if (c.solver == "dense-oracle") {
        sol = ocp::dense_qp_oracle(p);
    } else if (c.solver == "cyqlone-linear") {
        // equality-constrained solve of the problem without its bounds
        ocp::EqOCP e = p.equality_part();
        kkt::FactorOptions fo;
        fo.P       = c.partitions;
        fo.vlen    = c.vlen;
        fo.workers = c.workers;
        fo.tail    = tail_of(c.tail);
        kkt::FlopTrace trace;
        auto t1      = std::chrono::steady_clock::now();
        kkt::Factor f = kkt::factor(e, fo);
        auto t2      = std::chrono::steady_clock::now();
        auto s       = kkt::solve(f, e, ocp::EqRhs::of_problem(e));
        sol.u        = s.u;
        sol.x        = s.x;
        sol.lam      = s.lam;
        sol.y.assign(static_cast<std::size_t>(p.N + 1), Vec());
        for (index_t j = 0; j <= p.N; ++j)
            sol.y[static_cast<std::size_t>(j)].assign(
                static_cast<std::size_t>(j == p.N ? p.ny_term : p.ny), 0);
        auto res    = ocp::kkt_residual_eq(e, ocp::EqRhs::of_problem(e), s);
        sol.status  = res.max() < 1e-8 ? "solved" : "residual_too_large";
        sol.residuals.primal = res.dynamics;
        sol.residuals.dual   = std::max(res.stat_u,
                                        std::max(res.stat_x, res.terminal));
        sol.objective        = e.objective(sol.u, sol.x);
        t.riccati = std::chrono::duration<double>(t2 - t1).count();
    } else if (c.solver == "cyqpalm") {
        auto s = solver_settings(c);
        sol    = qpalm::alm_outer_loop(p, s, warm);
    } else {
        throw CLI::ValidationError("--solver", "unknown solver " + c.solver);
    }
    auto t3 = std::chrono::steady_clock::now();
    t.total = std::chrono::duration<double>(t3 - t0).count();
    index_t iters = std::max<index_t>(1, sol.inner_iterations);
    t.per_iteration = t.total / static_cast<double>(iters);
    return sol;
}

BenchRecord run_one(const BenchConfig &c, index_t instance,
                    index_t repetition) {
    BenchRecord rec;
    rec.config     = config_json(c);
    rec.instance   = instance;
    rec.repetition = repetition;
    OCPProblem p   = make_problem(c, instance);
    try {
        rec.model = kkt::flops_critical_path(
            p.nx, p.nu, c.partitions * ((p.N + c.partitions - 1) /
                                        c.partitions),
            c.partitions);
    } catch (const std::exception &) {
    }
    Solution sol;
    try {
        if (c.warm && c.solver == "cyqpalm") {
            // solve once (untimed), apply the first control, rebuild the
            // problem at the next state and time the shifted warm solve
            Solution first = run_solver(c, p, nullptr, rec.time);
            Vec x_next     = p.f[0];
            for (index_t i = 0; i < p.nx; ++i)
                for (index_t k = 0; k < p.nx; ++k)
                    x_next[static_cast<std::size_t>(i)] +=
                        p.A[0](i, k) * p.x_init[static_cast<std::size_t>(k)];
            for (index_t i = 0; i < p.nx; ++i)
                for (index_t k = 0; k < p.nu; ++k)
                    x_next[static_cast<std::size_t>(i)] +=
                        p.B[0](i, k) * first.u[0][static_cast<std::size_t>(k)];
            OCPProblem p2 = p;
            p2.x_init     = x_next;
            Solution warm = shift_by_one(p2, first);
            rec.time      = Timings{};
            sol           = run_solver(c, p2, &warm, rec.time);
        } else {
            sol = run_solver(c, p, nullptr, rec.time);
        }
        rec.status = sol.status;
    } catch (const std::exception &e) {
        rec.status = std::string("error: ") + e.what();
        return rec;
    }
    rec.outer           = sol.outer_iterations;
    rec.inner           = sol.inner_iterations;
    rec.line_search     = sol.line_search_iterations;
    rec.factorizations  = sol.factorizations;
    rec.factor_updates  = sol.factor_updates;
    rec.primal          = sol.residuals.primal;
    rec.dual            = sol.residuals.dual;
    rec.complementarity = sol.residuals.complementarity;
    rec.objective       = sol.objective;
    return rec;
}

json record_json(const BenchRecord &r) {
    json j;
    j["config"]     = r.config;
    j["instance"]   = r.instance;
    j["repetition"] = r.repetition;
    j["status"]     = r.status;
    j["time"]["total"]         = r.time.total;
    j["time"]["riccati"]       = r.time.riccati;
    j["time"]["schur"]         = r.time.schur;
    j["time"]["cr"]            = r.time.cr;
    j["time"]["tail"]          = r.time.tail;
    j["time"]["per_iteration"] = r.time.per_iteration;
    j["iterations"]["outer"]          = r.outer;
    j["iterations"]["inner"]          = r.inner;
    j["iterations"]["line_search"]    = r.line_search;
    j["iterations"]["factorizations"] = r.factorizations;
    j["iterations"]["factor_updates"] = r.factor_updates;
    j["residuals"]["primal"]          = r.primal;
    j["residuals"]["dual"]            = r.dual;
    j["residuals"]["complementarity"] = r.complementarity;
    j["objective"]                    = r.objective;
    j["flop_model"]["riccati"] = r.model.riccati;
    j["flop_model"]["schur"]   = r.model.schur;
    j["flop_model"]["cr"]      = r.model.cr;
    j["flop_model"]["total"]   = r.model.total;
    j["flop_model"]["serial"]  = r.model.serial;
    j["flop_model"]["speedup"] = r.model.speedup;
    return j;
}

void write_records(const std::vector<BenchRecord> &records,
                   const std::string &format, const std::string &out) {
    std::ostream *os = &std::cout;
    std::ofstream file;
    if (!out.empty()) {
        file.open(out);
        if (!file)
            throw std::runtime_error("cannot open output file " + out);
        os = &file;
    }
    if (format == "json") {
        json arr = json::array();
        for (const auto &r : records)
            arr.push_back(record_json(r));
        *os << arr.dump(2) << '\n';
        return;
    }
    // CSV with dot-flattened keys, one row per (instance, repetition)
    std::vector<std::pair<std::string, json>> cols;
    if (!records.empty())
        flatten(record_json(records.front()), "", cols);
    for (std::size_t i = 0; i < cols.size(); ++i)
        *os << cols[i].first << (i + 1 < cols.size() ? "," : "\n");
    for (const auto &r : records) {
        std::vector<std::pair<std::string, json>> vals;
        flatten(record_json(r), "", vals);
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const json &v = vals[i].second;
            if (v.is_string())
                *os << v.get<std::string>();
            else
                *os << v.dump();
            *os << (i + 1 < vals.size() ? "," : "\n");
        }
    }
}

void add_common_flags(CLI::App *cmd, BenchConfig &c) {
    cmd->add_option("--masses", c.masses, "mass-spring chain size (even)");
    cmd->add_option("--problem", c.problem_path, "ocp-v1 JSON problem file");
    cmd->add_option("--horizon", c.horizon, "horizon length N");
    cmd->add_option("--nx", c.nx, "random problem state dimension");
    cmd->add_option("--nu", c.nu, "random problem input dimension");
    cmd->add_option("--ny", c.ny, "random problem constraint rows");
    cmd->add_option("--seed", c.seed, "instance seed");
    cmd->add_option("--solver", c.solver,
                    "cyqlone-linear | cyqpalm | dense-oracle");
    cmd->add_option("--partitions", c.partitions, "P (power of two)");
    cmd->add_option("--vlen", c.vlen, "batch vector length");
    cmd->add_option("--workers", c.workers, "worker thread count");
    cmd->add_option("--tail", c.tail, "cr1 | pcr | pcg");
    cmd->add_flag("--warm", c.warm, "shift-by-one warm start protocol");
    cmd->add_flag("--cold", [&c](std::int64_t) { c.warm = false; },
                  "cold start (default)");
    cmd->add_option("--instances", c.instances, "number of instances");
    cmd->add_option("--repetitions", c.repetitions, "repetitions each");
    cmd->add_option("--tol", c.tol, "solver tolerance");
    cmd->add_option("--max-iter", c.max_iter, "outer iteration limit");
    cmd->add_flag("--no-updates", c.no_updates,
                  "disable factorization updates");
    cmd->add_option("--format", c.format, "csv | json");
    cmd->add_option("--out", c.out, "output path (default stdout)");
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"structured solvers for linear-quadratic optimal control"};
    app.require_subcommand(1);
    BenchConfig c;

    auto *run   = app.add_subcommand("run", "solve instances and report");
    auto *sweep = app.add_subcommand(
        "sweep", "cartesian sweep over masses and horizons");
    auto *check = app.add_subcommand(
        "check", "solve and verify the optimality residuals");
    add_common_flags(run, c);
    add_common_flags(check, c);
    std::vector<index_t> sweep_masses{2, 4};
    std::vector<index_t> sweep_horizons{8, 16};
    std::vector<index_t> sweep_partitions{4};
    std::vector<index_t> sweep_vlens{4};
    add_common_flags(sweep, c);
    sweep->add_option("--masses-list", sweep_masses, "masses grid");
    sweep->add_option("--horizon-list", sweep_horizons, "horizon grid");
    sweep->add_option("--partitions-list", sweep_partitions, "P grid");
    sweep->add_option("--vlen-list", sweep_vlens, "vlen grid");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            std::vector<BenchRecord> records;
            for (index_t i = 0; i < c.instances; ++i)
                for (index_t r = 0; r < c.repetitions; ++r)
                    records.push_back(run_one(c, i, r));
            write_records(records, c.format, c.out);
            for (const auto &r : records)
                if (r.status.rfind("error", 0) == 0)
                    return 1;
            return 0;
        }
        if (sweep->parsed()) {
            std::vector<BenchRecord> records;
            bool any_failed = false;
            for (index_t m : sweep_masses)
                for (index_t N : sweep_horizons)
                    for (index_t P : sweep_partitions)
                        for (index_t v : sweep_vlens) {
                            BenchConfig cc = c;
                            cc.masses      = m;
                            cc.horizon     = N;
                            cc.partitions  = P;
                            cc.vlen        = v;
                            for (index_t i = 0; i < c.instances; ++i) {
                                auto rec = run_one(cc, i, 0);
                                if (rec.status.rfind("error", 0) == 0)
                                    any_failed = true;
                                records.push_back(std::move(rec));
                            }
                        }
            write_records(records, c.format, c.out);
            return any_failed ? 1 : 0;
        }
        // check
        OCPProblem p = make_problem(c, 0);
        Timings t;
        Solution sol = run_solver(c, p, nullptr, t);
        ocp::ResidualReport rep = c.solver == "cyqlone-linear"
                                      ? sol.residuals
                                      : ocp::kkt_residual_qp(p, sol);
        std::cout << "status: " << sol.status << "\n"
                  << "primal residual: " << rep.primal << "\n"
                  << "dual residual: " << rep.dual << "\n"
                  << "complementarity: " << rep.complementarity << "\n";
        bool ok = rep.primal <= c.tol && rep.dual <= c.tol;
        std::cout << (ok ? "CHECK PASSED" : "CHECK FAILED") << "\n";
        return ok ? 0 : 1;
    } catch (const nlohmann::json::parse_error &e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
