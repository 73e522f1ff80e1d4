#include "nlhom/convolution.hpp"

#include <algorithm>
#include <complex>
#include <cstring>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "nlhom/errors.hpp"

namespace nlhom {

namespace {

std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

int next_fast_size(int n)
{
    for (int m = std::max(n, 1);; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7}) {
            while (r % p == 0)
                r /= p;
        }
        if (r == 1)
            return m;
    }
}

template <class T>
class FftwBuffer {
public:
    explicit FftwBuffer(std::size_t count) : size_(count)
    {
        data_ = static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(count, 1)));
        if (data_ == nullptr)
            throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(data_); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    FftwBuffer(FftwBuffer&& other) noexcept : data_(other.data_), size_(other.size_) { other.data_ = nullptr; }
    FftwBuffer& operator=(FftwBuffer&&) = delete;

    T* data() { return data_; }
    const T* data() const { return data_; }
    std::size_t size() const { return size_; }
    void zero() { std::memset(static_cast<void*>(data_), 0, sizeof(T) * size_); }

private:
    T* data_ = nullptr;
    std::size_t size_ = 0;
};

using Complex = std::complex<double>;

} // namespace

Sym6 to_sym6(const Mat3& m)
{
    return {m(0, 0), m(1, 1), m(2, 2), m(1, 2), m(0, 2), m(0, 1)};
}

Mat3 from_sym6(const Sym6& s)
{
    Mat3 m;
    m << s[0], s[5], s[4], s[5], s[1], s[3], s[4], s[3], s[2];
    return m;
}

struct KernelConvolution::Impl {
    Index3 dims{};
    Index3 padded{};
    std::size_t real_size = 0;
    std::size_t spec_size = 0;
    std::vector<std::vector<Complex>> kernel_hat; // six components
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;

    ~Impl()
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        if (forward)
            fftw_destroy_plan(forward);
        if (backward)
            fftw_destroy_plan(backward);
    }

    std::size_t padded_index(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(i) * padded[1] + j) * padded[2] + k;
    }

    void scatter(std::span<const double> x, int stride, int comp, double* buf) const
    {
        std::size_t node = 0;
        for (int i = 0; i < dims[0]; ++i)
            for (int j = 0; j < dims[1]; ++j)
                for (int k = 0; k < dims[2]; ++k, ++node)
                    buf[padded_index(i, j, k)] = x[node * stride + comp];
    }

    void gather(const double* buf, int stride, int comp, std::span<double> y) const
    {
        const double scale = 1.0 / static_cast<double>(real_size);
        std::size_t node = 0;
        for (int i = 0; i < dims[0]; ++i)
            for (int j = 0; j < dims[1]; ++j)
                for (int k = 0; k < dims[2]; ++k, ++node)
                    y[node * stride + comp] = buf[padded_index(i, j, k)] * scale;
    }
};

KernelConvolution::KernelConvolution(const Index3& dims, const SymKernel& kernel) : impl_(std::make_unique<Impl>())
{
    auto& d = *impl_;
    d.dims = dims;
    for (int c = 0; c < 3; ++c) {
        if (dims[c] < 1)
            throw ConfigurationError("convolution grid dimensions must be positive");
        d.padded[c] = next_fast_size(2 * dims[c] - 1);
    }
    d.real_size = static_cast<std::size_t>(d.padded[0]) * d.padded[1] * d.padded[2];
    d.spec_size = static_cast<std::size_t>(d.padded[0]) * d.padded[1] * (d.padded[2] / 2 + 1);

    FftwBuffer<double> real(d.real_size);
    FftwBuffer<fftw_complex> spec(d.spec_size);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        d.forward = fftw_plan_dft_r2c_3d(d.padded[0], d.padded[1], d.padded[2], real.data(), spec.data(),
                                         FFTW_ESTIMATE);
        d.backward = fftw_plan_dft_c2r_3d(d.padded[0], d.padded[1], d.padded[2], spec.data(), real.data(),
                                          FFTW_ESTIMATE);
    }
    if (!d.forward || !d.backward)
        throw Error("FFTW plan creation failed");

    // Wrap-around placement of W(offset) for offsets in (-dims, dims).
    std::vector<std::vector<double>> comps(6, std::vector<double>(d.real_size, 0.0));
    for (int a = -(dims[0] - 1); a <= dims[0] - 1; ++a) {
        for (int b = -(dims[1] - 1); b <= dims[1] - 1; ++b) {
            for (int c = -(dims[2] - 1); c <= dims[2] - 1; ++c) {
                const Sym6 w = kernel({a, b, c});
                const std::size_t idx = d.padded_index((a + d.padded[0]) % d.padded[0], (b + d.padded[1]) % d.padded[1],
                                                       (c + d.padded[2]) % d.padded[2]);
                for (int s = 0; s < 6; ++s)
                    comps[s][idx] = w[s];
            }
        }
    }
    d.kernel_hat.resize(6);
    for (int s = 0; s < 6; ++s) {
        std::memcpy(real.data(), comps[s].data(), sizeof(double) * d.real_size);
        fftw_execute_dft_r2c(d.forward, real.data(), spec.data());
        d.kernel_hat[s].resize(d.spec_size);
        for (std::size_t q = 0; q < d.spec_size; ++q)
            d.kernel_hat[s][q] = Complex(spec.data()[q][0], spec.data()[q][1]);
    }
}

KernelConvolution::~KernelConvolution() = default;
KernelConvolution::KernelConvolution(KernelConvolution&&) noexcept = default;
KernelConvolution& KernelConvolution::operator=(KernelConvolution&&) noexcept = default;

const Index3& KernelConvolution::dims() const { return impl_->dims; }

std::size_t KernelConvolution::node_count() const
{
    return static_cast<std::size_t>(impl_->dims[0]) * impl_->dims[1] * impl_->dims[2];
}

void KernelConvolution::apply_vector(std::span<const double> x, std::span<double> y) const
{
    const auto& d = *impl_;
    const std::size_t n = node_count();
    if (x.size() != 3 * n || y.size() != 3 * n)
        throw ContractViolation("convolution input/output size mismatch");

    FftwBuffer<double> real(d.real_size);
    std::vector<FftwBuffer<fftw_complex>> spec;
    spec.reserve(3);
    for (int c = 0; c < 3; ++c) {
        spec.emplace_back(d.spec_size);
        real.zero();
        d.scatter(x, 3, c, real.data());
        fftw_execute_dft_r2c(d.forward, real.data(), spec[c].data());
    }

    // Component pairs (a, b) -> Sym6 slot.
    static const int slot[3][3] = {{0, 5, 4}, {5, 1, 3}, {4, 3, 2}};
    FftwBuffer<fftw_complex> out(d.spec_size);
    for (int a = 0; a < 3; ++a) {
        for (std::size_t q = 0; q < d.spec_size; ++q) {
            Complex acc = 0.0;
            for (int b = 0; b < 3; ++b)
                acc += d.kernel_hat[slot[a][b]][q] * Complex(spec[b].data()[q][0], spec[b].data()[q][1]);
            out.data()[q][0] = acc.real();
            out.data()[q][1] = acc.imag();
        }
        fftw_execute_dft_c2r(d.backward, out.data(), real.data());
        d.gather(real.data(), 3, a, y);
    }
}

void KernelConvolution::apply_scalar(std::span<const double> s, std::span<double> y) const
{
    const auto& d = *impl_;
    const std::size_t n = node_count();
    if (s.size() != n || y.size() != 6 * n)
        throw ContractViolation("convolution input/output size mismatch");

    FftwBuffer<double> real(d.real_size);
    FftwBuffer<fftw_complex> spec(d.spec_size);
    real.zero();
    d.scatter(s, 1, 0, real.data());
    fftw_execute_dft_r2c(d.forward, real.data(), spec.data());

    FftwBuffer<fftw_complex> out(d.spec_size);
    for (int c = 0; c < 6; ++c) {
        for (std::size_t q = 0; q < d.spec_size; ++q) {
            const Complex v = d.kernel_hat[c][q] * Complex(spec.data()[q][0], spec.data()[q][1]);
            out.data()[q][0] = v.real();
            out.data()[q][1] = v.imag();
        }
        fftw_execute_dft_c2r(d.backward, out.data(), real.data());
        d.gather(real.data(), 6, c, y);
    }
}

} // namespace nlhom
