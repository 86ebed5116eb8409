#pragma once

#include "cbi/model.hpp"

#include <string>

namespace test {

inline std::string model_path(const std::string& name) { return std::string(CBI_MODELS_DIR) + "/" + name + ".json"; }

inline cbi::ModelParams model(const std::string& name) { return cbi::load_model(model_path(name)); }

// d = 1, no noise: X_t = e^{bt}x₀ + β(e^{bt} − 1)/b.
inline cbi::ModelParams linear_1d(double b, double beta, double x0) {
    cbi::ModelParams p;
    p.d = 1;
    p.c = cbi::Vector::Zero(1);
    p.beta = cbi::Vector::Constant(1, beta);
    p.B = cbi::Matrix::Constant(1, 1, b);
    p.mu.resize(1);
    p.x0 = cbi::Vector::Constant(1, x0);
    return p;
}

}  // namespace test
