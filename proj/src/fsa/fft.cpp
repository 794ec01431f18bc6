#include "fsa/fft.hpp"

#include <cmath>

#include "fsa/errors.hpp"

namespace fsa::fft {

using cplx = std::complex<double>;

static bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// in-place iterative Cooley-Tukey, n a power of two
static void fft_pow2(std::vector<cplx>& a, bool inverse) {
    size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        cplx wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                cplx u = a[i + j];
                cplx v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (auto& z : a) z /= static_cast<double>(n);
    }
}

// Bluestein: DFT of arbitrary n via a convolution of padded power-of-two size
static std::vector<cplx> bluestein(const std::vector<cplx>& x) {
    size_t n = x.size();
    size_t m = 1;
    while (m < 2 * n + 1) m <<= 1;

    std::vector<cplx> a(m, cplx(0, 0)), b(m, cplx(0, 0));
    std::vector<cplx> chirp(n);
    for (size_t k = 0; k < n; ++k) {
        // angle = pi * k^2 / n, k^2 reduced mod 2n to keep precision
        size_t k2 = (k * k) % (2 * n);
        double ang = M_PI * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = cplx(std::cos(ang), -std::sin(ang));
    }
    for (size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    b[0] = cplx(1, 0);
    for (size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);

    fft_pow2(a, false);
    fft_pow2(b, false);
    for (size_t i = 0; i < m; ++i) a[i] *= b[i];
    fft_pow2(a, true);

    std::vector<cplx> out(n);
    for (size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
    return out;
}

std::vector<cplx> dft(const std::vector<double>& x) {
    if (x.empty()) throw NumericError("dft: empty input");
    std::vector<cplx> a(x.begin(), x.end());
    if (is_pow2(a.size())) {
        fft_pow2(a, false);
        return a;
    }
    return bluestein(a);
}

std::vector<double> magnitude(const std::vector<double>& x) {
    auto spec = dft(x);
    size_t m = x.size() / 2 + 1;
    std::vector<double> out(m);
    for (size_t j = 0; j < m; ++j) out[j] = std::abs(spec[j]);
    return out;
}

}  // namespace fsa::fft
