#pragma once

#include <cmath>
#include <random>

#include "refnut/data_io.hpp"
#include "refnut/model.hpp"

namespace refnut::testing {

// Random household state with calibrated marginals and a random reference belief.
inline HouseholdState random_state(std::mt19937_64& eng, const Theta& th) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, 1.0);
    MonetaryScale scale;
    CovariateScaling cov;
    Household h;
    double s2 = std::log(1.0 + (460.9 / 515.57) * (460.9 / 515.57));
    h.income = 2.0 * std::exp(std::log(515.57) - 0.5 * s2 + std::sqrt(s2) * z(eng));
    h.price = 52.58 + 3.87 * z(eng);
    h.atole = u(eng) < 0.5;
    h.male = u(eng) < 0.52;
    h.birth_length = 49.64 + 2.29 * z(eng);
    ReferenceBelief b(74.0 + 6.0 * u(eng), 0.3 + 3.2 * u(eng));
    HouseholdState s = to_state(h, scale, cov, b);
    s.eps = th.sigma_eps * z(eng);
    return s;
}

}  // namespace refnut::testing
