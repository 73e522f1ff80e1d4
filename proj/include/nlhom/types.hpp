#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

namespace nlhom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Per-particle or per-node vector data, stored flat as [x0 y0 z0 x1 y1 z1 ...].
using Field = Eigen::VectorXd;

using Index3 = std::array<int, 3>;

inline Eigen::Ref<Vec3> at(Field& f, std::size_t i) { return f.segment<3>(3 * static_cast<Eigen::Index>(i)); }
inline Vec3 at(const Field& f, std::size_t i) { return f.segment<3>(3 * static_cast<Eigen::Index>(i)); }

inline Field zero_field(std::size_t count) { return Field::Zero(3 * static_cast<Eigen::Index>(count)); }

inline std::size_t point_count(const Field& f) { return static_cast<std::size_t>(f.size() / 3); }

} // namespace nlhom
