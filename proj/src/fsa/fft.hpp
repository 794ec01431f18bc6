#pragma once

#include <complex>
#include <vector>

namespace fsa::fft {

// Full n-point DFT of a real signal. Radix-2 iterative for powers of two,
// Bluestein chirp-z otherwise.
std::vector<std::complex<double>> dft(const std::vector<double>& x);

// |X_j| for j = 0 .. floor(n/2)
std::vector<double> magnitude(const std::vector<double>& x);

}  // namespace fsa::fft
