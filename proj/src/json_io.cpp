#include <cyqlone/ocp.hpp>

#include <json.hpp>

#include <fstream>

namespace cyqlone::ocp {

namespace {

using json = nlohmann::json;

json mat_to_json(const Mat &m) {
    json rows = json::array();
    for (index_t r = 0; r < m.rows; ++r) {
        json row = json::array();
        for (index_t c = 0; c < m.cols; ++c)
            row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json &j, index_t rows, index_t cols,
                  const char *name) {
    if (!j.is_array() || static_cast<index_t>(j.size()) != rows)
        throw std::runtime_error(std::string("ocp-v1: bad shape for ") + name);
    Mat m(rows, cols);
    for (index_t r = 0; r < rows; ++r) {
        const json &row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<index_t>(row.size()) != cols)
            throw std::runtime_error(std::string("ocp-v1: bad shape for ") +
                                     name);
        for (index_t c = 0; c < cols; ++c)
            m(r, c) = row[static_cast<std::size_t>(c)].get<real_t>();
    }
    return m;
}

json vec_to_json(const Vec &v) {
    json a = json::array();
    for (real_t x : v) {
        if (x == inf)
            a.push_back("inf");
        else if (x == -inf)
            a.push_back("-inf");
        else
            a.push_back(x);
    }
    return a;
}

Vec vec_from_json(const json &j, index_t n, const char *name) {
    if (!j.is_array() || static_cast<index_t>(j.size()) != n)
        throw std::runtime_error(std::string("ocp-v1: bad shape for ") + name);
    Vec v(static_cast<std::size_t>(n));
    for (index_t i = 0; i < n; ++i) {
        const json &x = j[static_cast<std::size_t>(i)];
        if (x.is_string()) {
            std::string s = x.get<std::string>();
            if (s == "inf")
                v[static_cast<std::size_t>(i)] = inf;
            else if (s == "-inf")
                v[static_cast<std::size_t>(i)] = -inf;
            else
                throw std::runtime_error(
                    std::string("ocp-v1: bad bound value in ") + name);
        } else {
            v[static_cast<std::size_t>(i)] = x.get<real_t>();
        }
    }
    return v;
}

} // namespace

std::string to_json(const OCPProblem &p) {
    json doc;
    doc["schema"] = "ocp-v1";
    doc["N"]      = p.N;
    doc["nx"]     = p.nx;
    doc["nu"]     = p.nu;
    doc["ny"]     = p.ny;
    doc["ny_terminal"] = p.ny_term;
    doc["x_init"]      = vec_to_json(p.x_init);
    json stages        = json::array();
    for (index_t j = 0; j < p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        json s;
        s["A"]  = mat_to_json(p.A[ju]);
        s["B"]  = mat_to_json(p.B[ju]);
        s["f"]  = vec_to_json(p.f[ju]);
        s["Q"]  = mat_to_json(p.Q[ju]);
        s["R"]  = mat_to_json(p.R[ju]);
        s["S"]  = mat_to_json(p.S[ju]);
        s["q"]  = vec_to_json(p.q[ju]);
        s["r"]  = vec_to_json(p.r[ju]);
        s["C"]  = mat_to_json(p.C[ju]);
        s["D"]  = mat_to_json(p.D[ju]);
        s["bl"] = vec_to_json(p.bl[ju]);
        s["bu"] = vec_to_json(p.bu[ju]);
        if (!p.E.empty())
            s["E"] = mat_to_json(p.E[ju]);
        stages.push_back(std::move(s));
    }
    doc["stages"] = std::move(stages);
    json term;
    term["Q"]  = mat_to_json(p.Q[static_cast<std::size_t>(p.N)]);
    term["q"]  = vec_to_json(p.q[static_cast<std::size_t>(p.N)]);
    term["C"]  = mat_to_json(p.C_term);
    term["bl"] = vec_to_json(p.bl[static_cast<std::size_t>(p.N)]);
    term["bu"] = vec_to_json(p.bu[static_cast<std::size_t>(p.N)]);
    if (!p.E.empty())
        term["E"] = mat_to_json(p.E[static_cast<std::size_t>(p.N)]);
    doc["terminal"] = std::move(term);
    return doc.dump(2);
}

OCPProblem from_json(const std::string &text) {
    json doc = json::parse(text); // throws nlohmann parse_error on bad input
    if (!doc.contains("schema") || doc["schema"] != "ocp-v1")
        throw std::runtime_error("ocp-v1: missing or unknown schema tag");
    OCPProblem p;
    p.N       = doc.at("N").get<index_t>();
    p.nx      = doc.at("nx").get<index_t>();
    p.nu      = doc.at("nu").get<index_t>();
    p.ny      = doc.at("ny").get<index_t>();
    p.ny_term = doc.at("ny_terminal").get<index_t>();
    p.resize();
    p.x_init = vec_from_json(doc.at("x_init"), p.nx, "x_init");
    const json &stages = doc.at("stages");
    if (static_cast<index_t>(stages.size()) != p.N)
        throw std::runtime_error("ocp-v1: stage count mismatch");
    bool has_E = p.N > 0 && stages[0].contains("E");
    if (has_E)
        p.E.assign(static_cast<std::size_t>(p.N + 1), Mat(p.nx, p.nx));
    for (index_t j = 0; j < p.N; ++j) {
        auto ju       = static_cast<std::size_t>(j);
        const json &s = stages[ju];
        p.A[ju]  = mat_from_json(s.at("A"), p.nx, p.nx, "A");
        p.B[ju]  = mat_from_json(s.at("B"), p.nx, p.nu, "B");
        p.f[ju]  = vec_from_json(s.at("f"), p.nx, "f");
        p.Q[ju]  = mat_from_json(s.at("Q"), p.nx, p.nx, "Q");
        p.R[ju]  = mat_from_json(s.at("R"), p.nu, p.nu, "R");
        p.S[ju]  = mat_from_json(s.at("S"), p.nu, p.nx, "S");
        p.q[ju]  = vec_from_json(s.at("q"), p.nx, "q");
        p.r[ju]  = vec_from_json(s.at("r"), p.nu, "r");
        p.C[ju]  = mat_from_json(s.at("C"), p.ny, p.nx, "C");
        p.D[ju]  = mat_from_json(s.at("D"), p.ny, p.nu, "D");
        p.bl[ju] = vec_from_json(s.at("bl"), p.ny, "bl");
        p.bu[ju] = vec_from_json(s.at("bu"), p.ny, "bu");
        if (has_E)
            p.E[ju] = mat_from_json(s.at("E"), p.nx, p.nx, "E");
    }
    const json &term = doc.at("terminal");
    auto jN          = static_cast<std::size_t>(p.N);
    p.Q[jN]  = mat_from_json(term.at("Q"), p.nx, p.nx, "terminal Q");
    p.q[jN]  = vec_from_json(term.at("q"), p.nx, "terminal q");
    p.C_term = mat_from_json(term.at("C"), p.ny_term, p.nx, "terminal C");
    p.bl[jN] = vec_from_json(term.at("bl"), p.ny_term, "terminal bl");
    p.bu[jN] = vec_from_json(term.at("bu"), p.ny_term, "terminal bu");
    if (has_E)
        p.E[jN] = mat_from_json(term.at("E"), p.nx, p.nx, "terminal E");
    for (index_t j = 0; j <= p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        index_t ny = j == p.N ? p.ny_term : p.ny;
        for (index_t i = 0; i < ny; ++i)
            if (p.bl[ju][static_cast<std::size_t>(i)] >
                p.bu[ju][static_cast<std::size_t>(i)])
                throw std::runtime_error("ocp-v1: bl > bu at stage " +
                                         std::to_string(j));
    }
    return p;
}

void save_json(const OCPProblem &p, const std::string &path) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open " + path + " for writing");
    os << to_json(p) << '\n';
}

OCPProblem load_json(const std::string &path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
    return from_json(text);
}

} // namespace cyqlone::ocp
