#pragma once

#include <random>

#include "nlhom/interaction.hpp"
#include "nlhom/lattice.hpp"

namespace testing_support {

inline nlhom::LatticeConfig unit_lattice(double eps, int period = 2)
{
    nlhom::LatticeConfig cfg;
    cfg.eps = eps;
    cfg.long_range_period = period;
    return cfg;
}

inline nlhom::InteractionModel unit_model(const std::string& K = "const:1")
{
    nlhom::InteractionModel m;
    m.long_range = nlhom::RadialProfile::parse(K);
    return m;
}

/// Random field that vanishes on fixed particles.
inline nlhom::Field random_free_field(const nlhom::ParticleSystem& ps, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    nlhom::Field u(3 * static_cast<Eigen::Index>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (int c = 0; c < 3; ++c)
            u[3 * static_cast<Eigen::Index>(i) + c] = ps.is_fixed(i) ? 0.0 : d(rng);
    return u;
}

inline nlhom::Field random_field(Eigen::Index n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    nlhom::Field u(n);
    for (Eigen::Index i = 0; i < n; ++i)
        u[i] = d(rng);
    return u;
}

} // namespace testing_support
