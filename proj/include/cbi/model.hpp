#pragma once

// Admissible parameter sets of multi-type CBI processes with finite atomic
// jump measures: types, JSON loading, validation and the moment functionals
// of the jump measures.

#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cbi/errors.hpp"

namespace cbi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

/// One atom of a finite jump measure: jumps of size `jump` arrive at `rate`
/// per unit time (per unit mass for branching measures).
struct JumpAtom {
    double rate = 0.0;
    Vector jump;
};

/// Finite atomic Lévy measure on R_+^d \ {0}.
struct JumpMeasure {
    std::vector<JumpAtom> atoms;

    bool empty() const noexcept { return atoms.empty(); }

    double total_mass() const noexcept {
        double m = 0.0;
        for (const auto& a : atoms) m += a.rate;
        return m;
    }
};

/// Admissible tuple (d, c, beta, B, nu, mu) together with a deterministic
/// initial state.
struct ModelParams {
    int d = 0;
    Vector c;
    Vector beta;
    Matrix B;
    JumpMeasure nu;
    std::vector<JumpMeasure> mu;
    Vector x0;
};

struct Violation {
    std::string field;
    std::string rule;
    std::string value;
};

struct ValidationReport {
    bool ok = true;
    std::vector<Violation> violations;
};

/// ⟨v, x⟩ = Σ v_k x_k for a complex direction and a real state (no
/// conjugation lands on v).
inline Complex project(const CVector& v, const Vector& x) {
    return (v.array() * x.cast<Complex>().array()).sum();
}

// ---------------------------------------------------------------------------
// Jump-measure functionals. Each is an exact finite sum over the atoms and
// vanishes on the empty measure. Norms are Euclidean.
// ---------------------------------------------------------------------------

/// Σ rate·z
inline Vector first_moment_vector(const JumpMeasure& m, int d) {
    Vector out = Vector::Zero(d);
    for (const auto& a : m.atoms) out += a.rate * a.jump;
    return out;
}

/// Σ rate·max(0, z_i − δ_ij), the jump contribution to the mean matrix entry (i, j).
inline double truncated_positive(const JumpMeasure& m, int i, int j) {
    const double delta = (i == j) ? 1.0 : 0.0;
    double s = 0.0;
    for (const auto& a : m.atoms) s += a.rate * std::max(0.0, a.jump[i] - delta);
    return s;
}

/// Σ rate·|⟨v, z⟩|² for a complex direction v (⟨v, z⟩ = Σ v_k z_k, z real).
inline double projected_second_moment(const JumpMeasure& m, const CVector& v) {
    double s = 0.0;
    for (const auto& a : m.atoms) s += a.rate * std::norm(project(v, a.jump));
    return s;
}

inline double projected_second_moment(const JumpMeasure& m, const Vector& v) {
    return projected_second_moment(m, CVector(v.cast<Complex>()));
}

/// Σ rate·‖z‖^p·1{‖z‖ ≥ 1}, p ≥ 1.
inline double norm_power_tail(const JumpMeasure& m, double p) {
    if (!(p >= 1.0)) throw DomainError("norm_power_tail: exponent must be >= 1");
    double s = 0.0;
    for (const auto& a : m.atoms) {
        const double n = a.jump.norm();
        if (n >= 1.0) s += a.rate * std::pow(n, p);
    }
    return s;
}

/// Σ rate·‖z‖·log‖z‖·1{‖z‖ ≥ 1}
inline double xlogx_tail(const JumpMeasure& m) {
    double s = 0.0;
    for (const auto& a : m.atoms) {
        const double n = a.jump.norm();
        if (n >= 1.0) s += a.rate * n * std::log(n);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_num(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

inline std::string idx(const std::string& base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
}

inline void check_nonneg_vector(const Vector& v, int d, const std::string& field,
                                ValidationReport& rep) {
    if (v.size() != d) {
        rep.violations.push_back({field, "length must equal d", std::to_string(v.size())});
        return;
    }
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i]) || v[i] < 0.0)
            rep.violations.push_back(
                {idx(field, static_cast<std::size_t>(i)), "must be finite and non-negative",
                 fmt_num(v[i])});
    }
}

inline void check_measure(const JumpMeasure& m, int d, const std::string& field,
                          ValidationReport& rep) {
    for (std::size_t k = 0; k < m.atoms.size(); ++k) {
        const auto& a = m.atoms[k];
        const std::string atom = idx(field, k);
        if (!std::isfinite(a.rate) || a.rate <= 0.0)
            rep.violations.push_back({atom + ".rate", "rate must be finite and positive",
                                      fmt_num(a.rate)});
        if (a.jump.size() != d) {
            rep.violations.push_back(
                {atom + ".jump", "length must equal d", std::to_string(a.jump.size())});
            continue;
        }
        bool nonzero = false;
        for (Eigen::Index i = 0; i < a.jump.size(); ++i) {
            const double z = a.jump[i];
            if (!std::isfinite(z) || z < 0.0)
                rep.violations.push_back({idx(atom + ".jump", static_cast<std::size_t>(i)),
                                          "jump entries must be finite and non-negative",
                                          fmt_num(z)});
            if (z > 0.0) nonzero = true;
        }
        if (!nonzero)
            rep.violations.push_back({atom + ".jump", "jump vector must be nonzero", "0"});
    }
}

}  // namespace detail

/// Checks every admissibility rule and reports each violation with its field
/// path. Never throws.
inline ValidationReport validate_admissible(const ModelParams& p) {
    ValidationReport rep;
    const int d = p.d;
    if (d < 1) {
        rep.violations.push_back({"d", "type count must be a positive integer", std::to_string(d)});
        rep.ok = false;
        return rep;
    }
    detail::check_nonneg_vector(p.c, d, "c", rep);
    detail::check_nonneg_vector(p.beta, d, "beta", rep);
    detail::check_nonneg_vector(p.x0, d, "x0", rep);

    if (p.B.rows() != d || p.B.cols() != d) {
        rep.violations.push_back({"B", "shape must be d x d",
                                  std::to_string(p.B.rows()) + "x" + std::to_string(p.B.cols())});
    } else {
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                const double b = p.B(i, j);
                const std::string f = detail::idx(detail::idx("B", i), j);
                if (!std::isfinite(b))
                    rep.violations.push_back({f, "entries must be finite", detail::fmt_num(b)});
                else if (i != j && b < 0.0)
                    rep.violations.push_back({f, "B off-diagonal negative", detail::fmt_num(b)});
            }
    }

    detail::check_measure(p.nu, d, "nu", rep);
    if (p.mu.size() != static_cast<std::size_t>(d)) {
        rep.violations.push_back({"mu", "must hold exactly d branching measures",
                                  std::to_string(p.mu.size())});
    } else {
        for (std::size_t l = 0; l < p.mu.size(); ++l)
            detail::check_measure(p.mu[l], d, detail::idx("mu", l), rep);
    }
    rep.ok = rep.violations.empty();
    return rep;
}

// ---------------------------------------------------------------------------
// JSON model files
// ---------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline double number_at(const json& j, const std::string& field) {
    if (!j.is_number()) throw SchemaError("field '" + field + "' must be a number");
    return j.get<double>();
}

inline Vector vector_at(const json& j, int d, const std::string& field) {
    if (!j.is_array()) throw SchemaError("field '" + field + "' must be an array");
    if (j.size() != static_cast<std::size_t>(d))
        throw SchemaError("field '" + field + "' must have length " + std::to_string(d) +
                          ", got " + std::to_string(j.size()));
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = number_at(j[i], idx(field, i));
    return v;
}

inline JumpMeasure measure_at(const json& j, int d, const std::string& field,
                              const char* jump_key) {
    if (!j.is_array()) throw SchemaError("field '" + field + "' must be an array of atoms");
    JumpMeasure m;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const json& a = j[k];
        const std::string f = idx(field, k);
        if (!a.is_object()) throw SchemaError("field '" + f + "' must be an object");
        for (const auto& [key, _] : a.items())
            if (key != "rate" && key != jump_key)
                throw SchemaError("unknown key '" + key + "' in '" + f + "'");
        if (!a.contains("rate")) throw SchemaError("missing field '" + f + ".rate'");
        if (!a.contains(jump_key))
            throw SchemaError("missing field '" + f + "." + jump_key + "'");
        m.atoms.push_back({number_at(a["rate"], f + ".rate"),
                           vector_at(a[jump_key], d, f + "." + jump_key)});
    }
    return m;
}

}  // namespace detail

/// Builds a ModelParams from an already-parsed JSON document. Enforces the
/// schema (keys and arities) but not admissibility.
inline ModelParams model_from_json(const nlohmann::json& j) {
    using detail::idx;
    if (!j.is_object()) throw SchemaError("model must be a JSON object");
    static const std::set<std::string> keys{"d", "c", "beta", "B", "nu", "mu", "x0"};
    for (const auto& [key, _] : j.items())
        if (!keys.count(key)) throw SchemaError("unknown key '" + key + "'");
    for (const auto& key : keys)
        if (!j.contains(key)) throw SchemaError("missing field '" + key + "'");

    if (!j["d"].is_number_integer()) throw SchemaError("field 'd' must be an integer");
    const long long d_raw = j["d"].get<long long>();
    if (d_raw < 1 || d_raw > 1'000'000) throw SchemaError("field 'd' must be a positive integer");
    const int d = static_cast<int>(d_raw);

    ModelParams p;
    p.d = d;
    p.c = detail::vector_at(j["c"], d, "c");
    p.beta = detail::vector_at(j["beta"], d, "beta");
    p.x0 = detail::vector_at(j["x0"], d, "x0");

    const auto& jb = j["B"];
    if (!jb.is_array() || jb.size() != static_cast<std::size_t>(d))
        throw SchemaError("field 'B' must be an array of " + std::to_string(d) + " rows");
    p.B.resize(d, d);
    for (int i = 0; i < d; ++i) {
        if (!jb[i].is_array() || jb[i].size() != static_cast<std::size_t>(d))
            throw SchemaError("field 'B' must have shape " + std::to_string(d) + "x" +
                              std::to_string(d) + " (row " + std::to_string(i) + ")");
        for (int k = 0; k < d; ++k) p.B(i, k) = detail::number_at(jb[i][k], idx(idx("B", i), k));
    }

    p.nu = detail::measure_at(j["nu"], d, "nu", "r");
    const auto& jm = j["mu"];
    if (!jm.is_array() || jm.size() != static_cast<std::size_t>(d))
        throw SchemaError("field 'mu' must be an array of " + std::to_string(d) + " measures");
    for (int l = 0; l < d; ++l) p.mu.push_back(detail::measure_at(jm[l], d, idx("mu", l), "z"));
    return p;
}

inline ModelParams parse_model(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed model file: ") + e.what());
    }
    return model_from_json(j);
}

/// Reads and parses a model file. Validation is not implied.
inline ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("error reading model file '" + path + "'");
    return parse_model(buf.str());
}

inline nlohmann::json to_json(const ModelParams& p) {
    using nlohmann::json;
    auto vec = [](const Vector& v) {
        json a = json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
        return a;
    };
    auto measure = [&](const JumpMeasure& m, const char* key) {
        json a = json::array();
        for (const auto& atom : m.atoms) a.push_back({{"rate", atom.rate}, {key, vec(atom.jump)}});
        return a;
    };
    json B = json::array();
    for (Eigen::Index i = 0; i < p.B.rows(); ++i) B.push_back(vec(p.B.row(i).transpose()));
    json mu = json::array();
    for (const auto& m : p.mu) mu.push_back(measure(m, "z"));
    return {{"d", p.d},        {"c", vec(p.c)},          {"beta", vec(p.beta)},
            {"B", B},          {"nu", measure(p.nu, "r")}, {"mu", mu},
            {"x0", vec(p.x0)}};
}

}  // namespace cbi
