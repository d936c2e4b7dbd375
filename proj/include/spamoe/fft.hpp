#pragma once

#include <algorithm>
#include <atomic>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "spamoe/common.hpp"
#include "spamoe/tensor.hpp"

namespace spamoe {

// Transform convention used throughout: the forward sum carries no scale
// factor, the inverse carries 1/(H*W), and spectra are stored centered with
// the DC bin at index (H/2, W/2). Under this convention Parseval reads
// sum |u_hat|^2 = H*W * sum u^2.

namespace fftdetail {

using cplx = std::complex<double>;

/// One-dimensional transform plan for a fixed length. Power-of-two lengths
/// run an iterative radix-2 FFT; everything else multiplies by a cached
/// DFT matrix. Plans are immutable after construction and shared.
struct Plan1D {
    int n;
    bool pow2;
    std::vector<cplx> twiddle_fwd;   // radix-2 stage twiddles, or full matrix row phases
    std::vector<int> bitrev;
    std::vector<cplx> matrix_fwd;    // n*n, only for non-pow2 sizes

    explicit Plan1D(int len) : n(len) {
        pow2 = (n & (n - 1)) == 0;
        if (pow2) {
            bitrev.resize(n);
            int bits = 0;
            while ((1 << bits) < n) ++bits;
            for (int i = 0; i < n; ++i) {
                int r = 0;
                for (int b = 0; b < bits; ++b)
                    if (i & (1 << b)) r |= 1 << (bits - 1 - b);
                bitrev[i] = r;
            }
            twiddle_fwd.resize(n / 2);
            for (int k = 0; k < n / 2; ++k)
                twiddle_fwd[k] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
        } else {
            matrix_fwd.resize(static_cast<std::size_t>(n) * n);
            for (int k = 0; k < n; ++k)
                for (int j = 0; j < n; ++j)
                    matrix_fwd[static_cast<std::size_t>(k) * n + j] =
                        std::polar(1.0, -2.0 * std::numbers::pi * (static_cast<long long>(k) * j % n) / n);
        }
    }

    // In-place transform of a contiguous length-n buffer. sign=-1 forward,
    // sign=+1 inverse (unscaled).
    void run(cplx* x, int sign) const {
        if (pow2) {
            for (int i = 0; i < n; ++i) {
                int r = bitrev[i];
                if (r > i) std::swap(x[i], x[r]);
            }
            for (int len = 2; len <= n; len <<= 1) {
                int half = len >> 1, step = n / len;
                for (int base = 0; base < n; base += len) {
                    for (int k = 0; k < half; ++k) {
                        cplx w = twiddle_fwd[static_cast<std::size_t>(k) * step];
                        if (sign > 0) w = std::conj(w);
                        cplx t = x[base + k + half] * w;
                        x[base + k + half] = x[base + k] - t;
                        x[base + k] += t;
                    }
                }
            }
        } else {
            std::vector<cplx> out(n);
            for (int k = 0; k < n; ++k) {
                cplx acc = 0.0;
                const cplx* row = matrix_fwd.data() + static_cast<std::size_t>(k) * n;
                for (int j = 0; j < n; ++j) {
                    cplx w = sign > 0 ? std::conj(row[j]) : row[j];
                    acc += x[j] * w;
                }
                out[k] = acc;
            }
            std::copy(out.begin(), out.end(), x);
        }
    }
};

inline std::shared_ptr<const Plan1D> plan_for(int n) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const Plan1D>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    auto p = std::make_shared<const Plan1D>(n);
    cache.emplace(n, p);
    return p;
}

/// Unnormalized 2D transform of a row-major h*w buffer, rows then columns.
inline void transform2d(cplx* data, int h, int w, int sign) {
    auto row_plan = plan_for(w);
    auto col_plan = plan_for(h);
    for (int i = 0; i < h; ++i) row_plan->run(data + static_cast<std::size_t>(i) * w, sign);
    std::vector<cplx> col(h);
    for (int j = 0; j < w; ++j) {
        for (int i = 0; i < h; ++i) col[i] = data[static_cast<std::size_t>(i) * w + j];
        col_plan->run(col.data(), sign);
        for (int i = 0; i < h; ++i) data[static_cast<std::size_t>(i) * w + j] = col[i];
    }
}

/// Cyclic shift placing entry k at (k + off) mod n along both axes.
inline void roll2d(std::vector<cplx>& data, int h, int w, int off_i, int off_j) {
    std::vector<cplx> out(data.size());
    for (int i = 0; i < h; ++i) {
        int ii = (i + off_i) % h;
        for (int j = 0; j < w; ++j) {
            int jj = (j + off_j) % w;
            out[static_cast<std::size_t>(ii) * w + jj] = data[static_cast<std::size_t>(i) * w + j];
        }
    }
    data.swap(out);
}

/// Forward centered transform of a row-major complex buffer, in place.
inline void fft2_centered(std::vector<cplx>& data, int h, int w) {
    transform2d(data.data(), h, w, -1);
    roll2d(data, h, w, h / 2, w / 2);
}

/// Inverse of fft2_centered; carries the 1/(h*w) factor.
inline void ifft2_centered(std::vector<cplx>& data, int h, int w) {
    roll2d(data, h, w, h - h / 2, w - w / 2);
    transform2d(data.data(), h, w, +1);
    double scale = 1.0 / (static_cast<double>(h) * w);
    for (auto& z : data) z *= scale;
}

}  // namespace fftdetail

/// Count of idft_centered calls whose discarded imaginary residue exceeded
/// the silent threshold. Diagnostic only; never resets implicitly.
inline std::atomic<std::uint64_t>& imag_residue_events() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

inline constexpr double kImagResidueSilent = 1e-10;

inline Spectrum2D dft_centered(const Field2D& u) {
    if (u.h < 2 || u.w < 2) throw InvalidInput("dft_centered: grid smaller than 2x2");
    if (!u.finite()) throw InvalidInput("dft_centered: non-finite input");
    Spectrum2D s(u.h, u.w);
    for (std::size_t i = 0; i < u.v.size(); ++i) s.v[i] = u.v[i];
    fftdetail::fft2_centered(s.v, u.h, u.w);
    return s;
}

/// Inverse centered transform returning the real part. Imaginary residue
/// below kImagResidueSilent is dropped silently; larger residue is still
/// dropped but bumps imag_residue_events().
inline Field2D idft_centered(const Spectrum2D& s) {
    if (s.h < 2 || s.w < 2) throw InvalidInput("idft_centered: grid smaller than 2x2");
    std::vector<fftdetail::cplx> buf = s.v;
    fftdetail::ifft2_centered(buf, s.h, s.w);
    double worst = 0.0;
    Field2D u(s.h, s.w);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        worst = std::max(worst, std::abs(buf[i].imag()));
        u.v[i] = buf[i].real();
    }
    if (worst >= kImagResidueSilent) imag_residue_events().fetch_add(1);
    return u;
}

/// Definition-level centered DFT: the plain double sum, evaluated per output
/// bin. Quadratic in the grid size and deliberately independent of the fast
/// path; the size guard keeps it inside test-scale grids.
inline Spectrum2D dft_oracle(const Field2D& u) {
    if (u.h < 2 || u.w < 2) throw InvalidInput("dft_oracle: grid smaller than 2x2");
    if (static_cast<long long>(u.h) * u.w > 4096)
        throw OracleTooLarge("dft_oracle: grid exceeds 4096 samples");
    const int h = u.h, w = u.w;
    // Phase tables e^{-2pi i a b / n}: memoized factors of the definition sum.
    std::vector<std::complex<double>> row_phase(static_cast<std::size_t>(h) * h);
    std::vector<std::complex<double>> col_phase(static_cast<std::size_t>(w) * w);
    for (int a = 0; a < h; ++a)
        for (int b = 0; b < h; ++b)
            row_phase[static_cast<std::size_t>(a) * h + b] =
                std::polar(1.0, -2.0 * std::numbers::pi * a * b / h);
    for (int a = 0; a < w; ++a)
        for (int b = 0; b < w; ++b)
            col_phase[static_cast<std::size_t>(a) * w + b] =
                std::polar(1.0, -2.0 * std::numbers::pi * a * b / w);
    Spectrum2D s(h, w);
    for (int i = 0; i < h; ++i) {
        int ki = ((i - h / 2) % h + h) % h;
        for (int j = 0; j < w; ++j) {
            int kj = ((j - w / 2) % w + w) % w;
            std::complex<double> acc = 0.0;
            for (int y = 0; y < h; ++y) {
                std::complex<double> rp = row_phase[static_cast<std::size_t>(ki) * h + y];
                for (int x = 0; x < w; ++x)
                    acc += u.at(y, x) * rp * col_phase[static_cast<std::size_t>(kj) * w + x];
            }
            s.at(i, j) = acc;
        }
    }
    return s;
}

inline double spectrum_energy(const Spectrum2D& s) {
    double e = 0.0;
    for (const auto& z : s.v) e += std::norm(z);
    return e;
}

inline double field_energy(const Field2D& u) {
    double e = 0.0;
    for (double x : u.v) e += x * x;
    return e;
}

}  // namespace spamoe
