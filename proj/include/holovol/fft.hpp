#pragma once

#include <complex>
#include <map>
#include <mutex>
#include <tuple>

#include <fftw3.h>

#include "holovol/grid.hpp"

namespace holovol {

// Thin wrapper over FFTW double-precision c2c transforms.
//
// Convention: forward transform is unnormalized, inverse divides by the
// element count, so ifft2(fft2(u)) == u. DC lives at index (0, 0).
//
// Plans are cached per (rows, cols, direction) and created with
// FFTW_ESTIMATE so planning never touches the data and repeated runs are
// bit-identical. FFTW_UNALIGNED lets one plan serve any heap buffer, which
// keeps execution through fftw_execute_dft safe from multiple threads;
// only plan creation needs the lock (the FFTW planner is single-threaded).
namespace detail {

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(int rows, int cols, int sign,
                  fftw_complex* in, fftw_complex* out) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_tuple(rows, cols, sign);
        auto it = plans_.find(key);
        if (it != plans_.end())
            return it->second;
        fftw_plan p = fftw_plan_dft_2d(rows, cols, in, out, sign,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        require(p != nullptr, ErrorCode::contract_violation,
                "FFTW failed to create a plan");
        plans_.emplace(key, p);
        return p;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    std::mutex mutex_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline void execute_dft(const ComplexGrid& in, ComplexGrid& out, int sign) {
    auto* ip = reinterpret_cast<fftw_complex*>(
        const_cast<std::complex<double>*>(in.data()));
    auto* op = reinterpret_cast<fftw_complex*>(out.data());
    fftw_plan p = PlanCache::instance().get(in.rows(), in.cols(), sign, ip, op);
    fftw_execute_dft(p, ip, op);
}

} // namespace detail

inline ComplexGrid fft2(const ComplexGrid& in) {
    require(!in.empty(), ErrorCode::invalid_input, "fft2 of empty grid");
    ComplexGrid out(in.rows(), in.cols());
    detail::execute_dft(in, out, FFTW_FORWARD);
    return out;
}

inline ComplexGrid ifft2(const ComplexGrid& in) {
    require(!in.empty(), ErrorCode::invalid_input, "ifft2 of empty grid");
    ComplexGrid out(in.rows(), in.cols());
    detail::execute_dft(in, out, FFTW_BACKWARD);
    const double norm = 1.0 / static_cast<double>(in.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] *= norm;
    return out;
}

// In-place variants reuse the caller's output buffer (out may alias in for
// FFTW out-of-place plans it may not, so we keep them distinct).
inline void fft2_into(const ComplexGrid& in, ComplexGrid& out) {
    require(in.same_shape(out) && !in.empty(), ErrorCode::invalid_input,
            "fft2_into shape mismatch");
    require(in.data() != out.data(), ErrorCode::invalid_input,
            "fft2_into buffers must be distinct");
    detail::execute_dft(in, out, FFTW_FORWARD);
}

inline void ifft2_into(const ComplexGrid& in, ComplexGrid& out) {
    require(in.same_shape(out) && !in.empty(), ErrorCode::invalid_input,
            "ifft2_into shape mismatch");
    require(in.data() != out.data(), ErrorCode::invalid_input,
            "ifft2_into buffers must be distinct");
    detail::execute_dft(in, out, FFTW_BACKWARD);
    const double norm = 1.0 / static_cast<double>(in.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] *= norm;
}

// Smallest n' >= n whose prime factors are all in {2, 3, 5, 7}. FFTW is
// O(n log n) only for smooth sizes; padded propagation rounds up to these.
inline int good_fft_size(int n) {
    require(n > 0, ErrorCode::invalid_input, "good_fft_size needs n > 0");
    for (int cand = n;; ++cand) {
        int r = cand;
        for (int f : {2, 3, 5, 7})
            while (r % f == 0)
                r /= f;
        if (r == 1)
            return cand;
    }
}

} // namespace holovol
