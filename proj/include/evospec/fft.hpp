#pragma once

#include <span>

#include "evospec/common.hpp"

namespace evospec::fft {

/// Unnormalized forward DFT: out_j = sum_t in_t exp(-i 2 pi j t / N).
CSeries forward(std::span<const cplx> in);
CSeries forward(std::span<const double> in);

/// Unnormalized inverse DFT: out_t = sum_j in_j exp(+i 2 pi j t / N).
/// Note there is no 1/N factor; this is the T * invDFT of the usual convention.
CSeries backward(std::span<const cplx> in);

}  // namespace evospec::fft
