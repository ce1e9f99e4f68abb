#include "ucm/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "ucm/autograd.hpp"

namespace ucm {

std::int64_t shape_numel(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dim");
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d <= 0) throw DimensionError("tensor dims must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {
std::atomic<bool> g_check_finite{false};
std::atomic<std::uint64_t> g_attention_budget{3ull << 30};  // 3 GiB
thread_local bool g_grad_enabled = true;
}  // namespace

void set_debug_check_finite(bool enabled) { g_check_finite.store(enabled); }
bool debug_check_finite_enabled() { return g_check_finite.load(); }

void set_attention_memory_budget(std::uint64_t bytes) { g_attention_budget.store(bytes); }
std::uint64_t attention_memory_budget() { return g_attention_budget.load(); }

void tune_allocator_for_training() {
#if defined(__GLIBC__)
    static bool done = false;
    if (done) return;
    done = true;
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool flag) { g_grad_enabled = flag; }

template <typename Real>
GradTape<Real>& GradTape<Real>::current() {
    thread_local GradTape<Real> tape;
    return tape;
}

template class GradTape<float>;
template class GradTape<double>;

template <typename Real>
void check_finite(const TensorT<Real>& t, const char* where) {
    if (!debug_check_finite_enabled()) return;
    for (const Real v : t.vec()) {
        if (!std::isfinite(v))
            throw ContractError(std::string("non-finite value detected in ") + where);
    }
}

template void check_finite<float>(const TensorT<float>&, const char*);
template void check_finite<double>(const TensorT<double>&, const char*);

}  // namespace ucm
