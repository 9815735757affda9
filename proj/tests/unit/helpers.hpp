#pragma once

#include "ewm/dataset.hpp"

#include <random>
#include <string>
#include <vector>

namespace testutil {

// Random three-arm dataset; every arm gets at least `min_per_arm` rows and the
// opt-in arm has both choices whenever it has two or more rows.
inline ewm::RctDataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                                      std::size_t min_per_arm = 2, bool discrete_x = false) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> grid(0, 5);
    std::vector<std::string> schema;
    for (std::size_t k = 0; k < dim; ++k) schema.push_back("x" + std::to_string(k + 1));
    std::vector<ewm::Household> rows;
    for (std::size_t i = 0; i < n; ++i) {
        ewm::Household h;
        h.id = "r" + std::to_string(i);
        for (std::size_t k = 0; k < dim; ++k) h.x.push_back(discrete_x ? grid(rng) : u(rng));
        const auto a = i < 3 * min_per_arm ? static_cast<int>(i % 3) : static_cast<int>(u(rng) * 3.0);
        h.arm = static_cast<ewm::Arm>(std::min(a, 2));
        if (h.arm == ewm::Arm::T) h.choice = ewm::Choice::T;
        else if (h.arm == ewm::Arm::NT) h.choice = ewm::Choice::NT;
        else h.choice = (i % 2 == 0) == (u(rng) < 0.5) ? ewm::Choice::T : ewm::Choice::NT;
        h.y_base = 40.0 + 20.0 * u(rng);
        h.y_treat = 40.0 + 20.0 * u(rng);
        rows.push_back(std::move(h));
    }
    // guarantee both choices in the opt-in arm
    int seen_t = 0, seen_nt = 0;
    for (const auto& h : rows)
        if (h.arm == ewm::Arm::O) (h.choice == ewm::Choice::T ? seen_t : seen_nt)++;
    for (auto& h : rows) {
        if (h.arm != ewm::Arm::O) continue;
        if (seen_t == 0) { h.choice = ewm::Choice::T; seen_t = 1; --seen_nt; }
        else if (seen_nt == 0 && seen_t > 1) { h.choice = ewm::Choice::NT; seen_nt = 1; --seen_t; }
    }
    return ewm::RctDataset(std::move(schema), std::move(rows));
}

inline std::vector<double> random_welfare(std::mt19937_64& rng, std::size_t n, double scale = 100.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> w(n);
    for (auto& v : w) v = g(rng);
    return w;
}

} // namespace testutil
