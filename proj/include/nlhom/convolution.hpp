#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>

#include "nlhom/types.hpp"

namespace nlhom {

/// Symmetric 3x3 kernel value, components ordered xx, yy, zz, yz, xz, xy.
using Sym6 = std::array<double, 6>;

/// Kernel as a function of the integer grid offset between target and source node.
using SymKernel = std::function<Sym6(const Index3& offset)>;

Sym6 to_sym6(const Mat3& m);
Mat3 from_sym6(const Sym6& s);

/// Aperiodic convolution of grid data with a translation-invariant symmetric 3x3 kernel, evaluated
/// exactly through zero-padded real FFTs.  Nodes are ordered with z fastest.
class KernelConvolution {
public:
    KernelConvolution(const Index3& dims, const SymKernel& kernel);
    ~KernelConvolution();
    KernelConvolution(KernelConvolution&&) noexcept;
    KernelConvolution& operator=(KernelConvolution&&) noexcept;

    const Index3& dims() const;
    std::size_t node_count() const;

    /// y_a(i) = sum_j W_ab(i - j) x_b(j); x and y hold three values per node.
    void apply_vector(std::span<const double> x, std::span<double> y) const;

    /// y_c(i) = sum_j W_c(i - j) s(j) for each of the six kernel components; y holds six values per node.
    void apply_scalar(std::span<const double> s, std::span<double> y) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace nlhom
