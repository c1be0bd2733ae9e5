#include "evospec/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace evospec::fft {

namespace {

// FFTW planning is not thread-safe; execution through the new-array interface
// is. Plans are cached per (size, direction) and never destroyed.
class PlanCache {
 public:
  fftw_plan get(int n, int sign) {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    auto* in = fftw_alloc_complex(static_cast<std::size_t>(n));
    auto* out = fftw_alloc_complex(static_cast<std::size_t>(n));
    fftw_plan p = fftw_plan_dft_1d(n, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

CSeries run(std::span<const cplx> in, int sign) {
  const int n = static_cast<int>(in.size());
  CSeries src(in.begin(), in.end());
  CSeries out(in.size());
  if (n == 0) return out;
  fftw_plan p = cache().get(n, sign);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(src.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace

CSeries forward(std::span<const cplx> in) { return run(in, FFTW_FORWARD); }

CSeries forward(std::span<const double> in) {
  CSeries c(in.begin(), in.end());
  return run(c, FFTW_FORWARD);
}

CSeries backward(std::span<const cplx> in) { return run(in, FFTW_BACKWARD); }

}  // namespace evospec::fft
