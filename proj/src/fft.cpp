#include "fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <memory>
#include <mutex>

namespace pcfs::detail {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
using Buffer = std::unique_ptr<fftw_complex[], FftwFree>;

class Plan {
  public:
    Plan(int n, fftw_complex* in, fftw_complex* out, int sign) {
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_1d(n, in, out, sign, FFTW_ESTIMATE);
    }
    ~Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;

    void execute() const { fftw_execute(plan_); }

  private:
    fftw_plan plan_;
};

std::vector<std::complex<double>> transform(std::span<const std::complex<double>> x, int sign) {
    const auto n = x.size();
    Buffer in(fftw_alloc_complex(n));
    Buffer out(fftw_alloc_complex(n));
    Plan plan(static_cast<int>(n), in.get(), out.get(), sign);
    // std::complex<double> is layout compatible with fftw_complex
    std::memcpy(in.get(), x.data(), n * sizeof(fftw_complex));
    plan.execute();
    std::vector<std::complex<double>> result(n);
    std::memcpy(static_cast<void*>(result.data()), out.get(), n * sizeof(fftw_complex));
    return result;
}

}  // namespace

std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x) {
    return transform(x, FFTW_FORWARD);
}

std::vector<std::complex<double>> dft(std::span<const double> x) {
    std::vector<std::complex<double>> c(x.begin(), x.end());
    return transform(c, FFTW_FORWARD);
}

std::vector<std::complex<double>> idft(std::span<const std::complex<double>> x) {
    auto r = transform(x, FFTW_BACKWARD);
    const double scale = 1.0 / static_cast<double>(x.size());
    for (auto& v : r) v *= scale;
    return r;
}

}  // namespace pcfs::detail
