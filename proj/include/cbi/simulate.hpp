#pragma once

// Euler scheme with exact compound-Poisson jumps for the CBI stochastic
// differential equation, and deterministic parallel ensembles.
//
// One step of size dt from the pre-step state X:
//   1. branching jump counts N_ℓ ~ Poisson(X_ℓ |μ_ℓ| dt), immigration count
//      N ~ Poisson(|ν| dt); atoms drawn proportionally to their rates;
//   2. X += (β + B̃X − Σ_ℓ X_ℓ m_ℓ) dt, m_ℓ = ∫ z μ_ℓ(dz) (compensator);
//   3. X_ℓ += sqrt(2 c_ℓ max(0, X_ℓ) dt) Z_ℓ with the pre-step X_ℓ;
//   4. X += all drawn jumps;
//   5. X = max(X, 0).
// Random draws happen in that order: jump types 1..d, immigration, normals.
// Record times are snapped to the nearest multiple of dt.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "cbi/errors.hpp"
#include "cbi/model.hpp"
#include "cbi/rng.hpp"
#include "cbi/spectral.hpp"

namespace cbi {

struct SimConfig {
    double dt = 1e-3;
    double horizon = 1.0;
    std::size_t paths = 1;
    std::uint64_t seed = 0;
    std::vector<double> record_grid;  ///< empty: record only at the horizon
    unsigned workers = 1;
};

struct Trajectory {
    std::vector<double> times;  ///< snapped record times
    std::vector<Vector> states;
    std::uint64_t path_seed = 0;
};

/// Per record time aggregates over all paths, accumulated in path order.
struct EnsembleStats {
    std::vector<double> times;
    std::vector<Vector> mean;
    std::vector<Vector> mean_se;                   ///< standard error of each mean component
    std::vector<std::vector<double>> proj_second;  ///< [time][k] mean |⟨v_k, X_t⟩|²
    std::vector<std::vector<double>> proj_second_se;
    std::vector<std::size_t> count;
    std::vector<CVector> projections;
    /// Raw states [time] as d × paths matrices, filled on request.
    std::vector<Matrix> samples;
};

namespace detail {

struct StepPlan {
    long long steps = 0;
    std::vector<long long> record_steps;
    std::vector<double> times;
};

inline StepPlan plan_steps(const SimConfig& cfg) {
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw DomainError("simulation: dt must be positive");
    if (!(cfg.horizon >= 0.0) || !std::isfinite(cfg.horizon))
        throw DomainError("simulation: horizon must be >= 0");
    StepPlan plan;
    plan.steps = std::llround(cfg.horizon / cfg.dt);
    std::vector<double> grid = cfg.record_grid;
    if (grid.empty()) grid.push_back(cfg.horizon);
    const double slack = 0.5 * cfg.dt;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid[i];
        if (!(t >= -slack) || t > cfg.horizon + slack)
            throw DomainError("simulation: record time " + std::to_string(t) + " outside [0, horizon]");
        if (i > 0 && t < grid[i - 1]) throw DomainError("simulation: record grid must be sorted");
        const long long k = std::clamp(std::llround(t / cfg.dt), 0LL, plan.steps);
        plan.record_steps.push_back(k);
        plan.times.push_back(static_cast<double>(k) * cfg.dt);
    }
    return plan;
}

/// Precomputed step coefficients; flat row-major arrays keep the inner loop
/// allocation-free.
struct Stepper {
    int d = 0;
    double dt = 0.0;
    std::vector<double> drift_matrix;  // B̃ − [m_1 … m_d]
    std::vector<double> beta;
    std::vector<double> diffusion;     // 2 c_ℓ dt
    struct Measure {
        double mass = 0.0;
        std::vector<double> cumulative;
        std::vector<double> jumps;  // atoms × d
    };
    std::vector<Measure> branching;
    Measure immigration;

    static Measure flatten(const JumpMeasure& m, int d) {
        Measure out;
        double acc = 0.0;
        for (const auto& a : m.atoms) {
            acc += a.rate;
            out.cumulative.push_back(acc);
            for (int i = 0; i < d; ++i) out.jumps.push_back(a.jump[i]);
        }
        out.mass = acc;
        return out;
    }

    Stepper(const ModelParams& p, const MeanParams& mp, double step) : d(p.d), dt(step) {
        drift_matrix.resize(static_cast<std::size_t>(d * d));
        for (int i = 0; i < d; ++i)
            for (int l = 0; l < d; ++l) {
                const Vector m = first_moment_vector(p.mu[static_cast<std::size_t>(l)], d);
                drift_matrix[static_cast<std::size_t>(i * d + l)] = mp.b_tilde(i, l) - m[i];
            }
        for (int i = 0; i < d; ++i) {
            beta.push_back(p.beta[i]);
            diffusion.push_back(2.0 * p.c[i] * dt);
        }
        for (const auto& m : p.mu) branching.push_back(flatten(m, d));
        immigration = flatten(p.nu, d);
    }

    void add_jumps(const Measure& m, std::uint64_t count, PathRng& rng, double* acc) const {
        const std::size_t atoms = m.cumulative.size();
        for (std::uint64_t n = 0; n < count; ++n) {
            const double target = rng.uniform() * m.mass;
            std::size_t k = 0;
            while (k + 1 < atoms && target >= m.cumulative[k]) ++k;
            const double* z = &m.jumps[k * static_cast<std::size_t>(d)];
            for (int i = 0; i < d; ++i) acc[i] += z[i];
        }
    }

    /// Advances x in place; `scratch` holds 2d doubles.
    void step(double* x, double* scratch, PathRng& rng) const {
        double* jumps = scratch;
        double* next = scratch + d;
        std::fill(jumps, jumps + d, 0.0);
        for (int l = 0; l < d; ++l) {
            const auto& m = branching[static_cast<std::size_t>(l)];
            if (m.mass > 0.0 && x[l] > 0.0) add_jumps(m, rng.poisson(x[l] * m.mass * dt), rng, jumps);
        }
        if (immigration.mass > 0.0) add_jumps(immigration, rng.poisson(immigration.mass * dt), rng, jumps);
        for (int i = 0; i < d; ++i) {
            double drift = beta[static_cast<std::size_t>(i)];
            const double* row = &drift_matrix[static_cast<std::size_t>(i * d)];
            for (int l = 0; l < d; ++l) drift += row[l] * x[l];
            next[i] = x[i] + drift * dt;
        }
        for (int i = 0; i < d; ++i) {
            const double c2 = diffusion[static_cast<std::size_t>(i)];
            if (c2 > 0.0) next[i] += std::sqrt(c2 * std::max(0.0, x[i])) * rng.normal();
        }
        for (int i = 0; i < d; ++i) x[i] = std::max(0.0, next[i] + jumps[i]);
    }
};

inline void run_path(const Stepper& stepper, const StepPlan& plan, const Vector& x0,
                     std::uint64_t path_seed, double* out /* records × d */) {
    const int d = stepper.d;
    std::vector<double> x(x0.data(), x0.data() + d);
    std::vector<double> scratch(static_cast<std::size_t>(2 * d));
    PathRng rng(path_seed);
    std::size_t next_record = 0;
    const std::size_t records = plan.record_steps.size();
    auto emit = [&](long long k) {
        while (next_record < records && plan.record_steps[next_record] == k) {
            std::copy(x.begin(), x.end(), out + next_record * static_cast<std::size_t>(d));
            ++next_record;
        }
    };
    emit(0);
    for (long long k = 1; k <= plan.steps && next_record < records; ++k) {
        stepper.step(x.data(), scratch.data(), rng);
        for (int i = 0; i < d; ++i)
            if (!std::isfinite(x[static_cast<std::size_t>(i)]))
                throw SimulationError("non-finite state at step " + std::to_string(k), k);
        emit(k);
    }
}

}  // namespace detail

inline Trajectory simulate_path(const ModelParams& p, const MeanParams& mp, const SimConfig& cfg,
                                std::uint64_t path_index) {
    const auto plan = detail::plan_steps(cfg);
    const detail::Stepper stepper(p, mp, cfg.dt);
    const std::size_t records = plan.record_steps.size();
    std::vector<double> buf(records * static_cast<std::size_t>(p.d));
    Trajectory tr;
    tr.path_seed = derive_path_seed(cfg.seed, path_index);
    detail::run_path(stepper, plan, p.x0, tr.path_seed, buf.data());
    tr.times = plan.times;
    for (std::size_t r = 0; r < records; ++r)
        tr.states.push_back(Eigen::Map<const Vector>(&buf[r * static_cast<std::size_t>(p.d)], p.d));
    return tr;
}

/// Runs paths 0..paths−1 over `cfg.workers` threads. Aggregation order is the
/// path index, so the result is independent of the worker count.
inline EnsembleStats simulate_ensemble(const ModelParams& p, const MeanParams& mp,
                                       const SimConfig& cfg,
                                       const std::vector<CVector>& projections = {},
                                       bool keep_samples = false) {
    if (cfg.paths < 1) throw DomainError("simulation: paths must be >= 1");
    for (const auto& v : projections)
        if (v.size() != p.d) throw DomainError("simulation: projection length must equal d");
    const auto plan = detail::plan_steps(cfg);
    const detail::Stepper stepper(p, mp, cfg.dt);
    const std::size_t records = plan.record_steps.size();
    const std::size_t paths = cfg.paths;
    const auto d = static_cast<std::size_t>(p.d);

    // samples[r] is d × paths, column = path.
    std::vector<Matrix> samples(records, Matrix(p.d, static_cast<Eigen::Index>(paths)));
    std::vector<std::exception_ptr> errors(paths);

    auto worker = [&](std::size_t first, std::size_t last) {
        std::vector<double> buf(records * d);
        for (std::size_t path = first; path < last; ++path) {
            try {
                detail::run_path(stepper, plan, p.x0, derive_path_seed(cfg.seed, path), buf.data());
                for (std::size_t r = 0; r < records; ++r)
                    samples[r].col(static_cast<Eigen::Index>(path)) =
                        Eigen::Map<const Vector>(&buf[r * d], p.d);
            } catch (...) {
                errors[path] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, paths);
    if (workers == 1) {
        worker(0, paths);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (paths + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t first = w * chunk;
            const std::size_t last = std::min(paths, first + chunk);
            if (first < last) pool.emplace_back(worker, first, last);
        }
    }
    for (std::size_t path = 0; path < paths; ++path) {
        if (!errors[path]) continue;
        try {
            std::rethrow_exception(errors[path]);
        } catch (const SimulationError& e) {
            throw SimulationError(std::string(e.what()) + " (path " + std::to_string(path) + ")",
                                  e.step(), static_cast<long long>(path));
        }
    }

    EnsembleStats st;
    st.times = plan.times;
    st.projections = projections;
    const double n = static_cast<double>(paths);
    for (std::size_t r = 0; r < records; ++r) {
        const Matrix& S = samples[r];
        Vector mean = Vector::Zero(p.d);
        for (std::size_t k = 0; k < paths; ++k) mean += S.col(static_cast<Eigen::Index>(k));
        mean /= n;
        Vector var = Vector::Zero(p.d);
        for (std::size_t k = 0; k < paths; ++k)
            var += (S.col(static_cast<Eigen::Index>(k)) - mean).cwiseAbs2();
        var /= std::max(1.0, n - 1.0);
        st.mean.push_back(mean);
        st.mean_se.push_back((var / n).cwiseSqrt());

        std::vector<double> second, second_se;
        for (const auto& v : projections) {
            double m = 0.0;
            for (std::size_t k = 0; k < paths; ++k)
                m += std::norm(project(v, S.col(static_cast<Eigen::Index>(k))));
            m /= n;
            double q = 0.0;
            for (std::size_t k = 0; k < paths; ++k) {
                const double dev = std::norm(project(v, S.col(static_cast<Eigen::Index>(k)))) - m;
                q += dev * dev;
            }
            q /= std::max(1.0, n - 1.0);
            second.push_back(m);
            second_se.push_back(std::sqrt(q / n));
        }
        st.proj_second.push_back(std::move(second));
        st.proj_second_se.push_back(std::move(second_se));
        st.count.push_back(paths);
    }
    if (keep_samples) st.samples = std::move(samples);
    return st;
}

// ---------------------------------------------------------------------------
// CSV export, 17 significant digits.
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, int d) {
    const auto old = os.precision(17);
    os << "t";
    for (int i = 1; i <= d; ++i) os << ",x" << i;
    os << "\n";
    for (std::size_t r = 0; r < tr.times.size(); ++r) {
        os << tr.times[r];
        for (int i = 0; i < d; ++i) os << "," << tr.states[r][i];
        os << "\n";
    }
    os.precision(old);
}

inline void write_ensemble_csv(std::ostream& os, const EnsembleStats& st, int d) {
    const auto old = os.precision(17);
    os << "t";
    for (int i = 1; i <= d; ++i) os << ",mean_" << i;
    for (std::size_t k = 1; k <= st.projections.size(); ++k) os << ",proj_" << k << "_second_moment";
    os << "\n";
    for (std::size_t r = 0; r < st.times.size(); ++r) {
        os << st.times[r];
        for (int i = 0; i < d; ++i) os << "," << st.mean[r][i];
        for (double q : st.proj_second[r]) os << "," << q;
        os << "\n";
    }
    os.precision(old);
}

}  // namespace cbi
