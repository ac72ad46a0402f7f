// Copyright (C) 2026 The realism authors
// SPDX-License-Identifier: Apache-2.0

#include "realism/params.hpp"

#include <cmath>

#include "realism/random.hpp"

namespace realism {

Matrix init_uniform(Rng& rng, long rows, long cols, long fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1L, fan_in)));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<double>(static_cast<float>(rng.uniform(-bound, bound)));
    }
    return m;
}

void round_to_float(Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace realism
