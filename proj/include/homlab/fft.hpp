#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "homlab/grid.hpp"

namespace homlab {

using Complex = std::complex<double>;

namespace detail {

struct PlanPair {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

// FFTW planning is not thread-safe; execution through the new-array interface is.
class PlanCache {
public:
    static PlanCache& instance()
    {
        static PlanCache cache;
        return cache;
    }

    PlanPair get(int d, Index n)
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_tuple(d, n);
        auto it = plans_.find(key);
        if (it != plans_.end()) {
            return it->second;
        }
        std::array<int, 3> dims{static_cast<int>(n), static_cast<int>(n), static_cast<int>(n)};
        Index real_size = 1;
        for (int a = 0; a < d; ++a) {
            real_size *= n;
        }
        const Index spec_size = real_size / n * (n / 2 + 1);
        std::vector<double> in(static_cast<std::size_t>(real_size));
        std::vector<Complex> out(static_cast<std::size_t>(spec_size));
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        PlanPair p;
        p.forward = fftw_plan_dft_r2c(d, dims.data(), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                      flags);
        p.backward = fftw_plan_dft_c2r(d, dims.data(), reinterpret_cast<fftw_complex*>(out.data()), in.data(),
                                       flags | FFTW_DESTROY_INPUT);
        plans_.emplace(key, p);
        return p;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache()
    {
        for (auto& [key, p] : plans_) {
            fftw_destroy_plan(p.forward);
            fftw_destroy_plan(p.backward);
        }
    }

    std::mutex mutex_;
    std::map<std::tuple<int, Index>, PlanPair> plans_;
};

}  // namespace detail

// Half-complex spectrum of a real field. Frequencies along the last axis run
// over [0, N/2]; the others over [0, N).
class Spectrum {
public:
    Spectrum() = default;
    explicit Spectrum(const GridSpec& g)
        : grid_(g), half_(g.n() / 2 + 1), coeffs_(static_cast<std::size_t>(g.cells() / g.n() * (g.n() / 2 + 1)))
    {
    }

    const GridSpec& grid() const { return grid_; }
    Index size() const { return static_cast<Index>(coeffs_.size()); }
    Complex& operator[](Index i) { return coeffs_[static_cast<std::size_t>(i)]; }
    const Complex& operator[](Index i) const { return coeffs_[static_cast<std::size_t>(i)]; }
    Complex* data() { return coeffs_.data(); }

    // Integer frequency vector of spectral slot i.
    Coord frequency(Index i) const
    {
        Coord k{0, 0, 0};
        const int d = grid_.d();
        k[d - 1] = i % half_;
        Index rest = i / half_;
        for (int a = d - 2; a >= 0; --a) {
            k[a] = rest % grid_.n();
            rest /= grid_.n();
        }
        return k;
    }

    // Slots on the last axis that stand for a conjugate pair in the full spectrum.
    double multiplicity(Index i) const
    {
        const Index kl = i % half_;
        return (kl == 0 || 2 * kl == grid_.n()) ? 1.0 : 2.0;
    }

private:
    GridSpec grid_;
    Index half_ = 0;
    std::vector<Complex> coeffs_;
};

inline Spectrum forward_fft(const ScalarField& u)
{
    const GridSpec& g = u.grid();
    Spectrum s(g);
    auto plans = detail::PlanCache::instance().get(g.d(), g.n());
    fftw_execute_dft_r2c(plans.forward, const_cast<double*>(u.values().data()),
                         reinterpret_cast<fftw_complex*>(s.data()));
    return s;
}

// Normalized inverse: inverse_fft(forward_fft(u)) == u.
inline ScalarField inverse_fft(Spectrum s)
{
    const GridSpec& g = s.grid();
    ScalarField u(g);
    auto plans = detail::PlanCache::instance().get(g.d(), g.n());
    fftw_execute_dft_c2r(plans.backward, reinterpret_cast<fftw_complex*>(s.data()), u.values().data());
    u *= 1.0 / static_cast<double>(g.cells());
    return u;
}

// Discrete symbol of -div(grad): sum_i 4 sin^2(pi k_i / N).
inline double laplacian_symbol(const GridSpec& g, const Coord& k)
{
    double s = 0.0;
    for (int a = 0; a < g.d(); ++a) {
        const double t = std::sin(M_PI * static_cast<double>(k[a]) / static_cast<double>(g.n()));
        s += 4.0 * t * t;
    }
    return s;
}

// Fourier factor of the forward difference along axis a: exp(2 pi i k_a / N) - 1.
inline Complex forward_difference_symbol(const GridSpec& g, const Coord& k, int axis)
{
    const double theta = 2.0 * M_PI * static_cast<double>(k[axis]) / static_cast<double>(g.n());
    return Complex(std::cos(theta) - 1.0, std::sin(theta));
}

// Multiply the spectrum of u by mult(k) and transform back.
template <class Multiplier>
inline ScalarField spectral_filter(const ScalarField& u, Multiplier&& mult)
{
    Spectrum s = forward_fft(u);
    for (Index i = 0; i < s.size(); ++i) {
        s[i] *= mult(s.frequency(i));
    }
    return inverse_fft(std::move(s));
}

}  // namespace homlab
