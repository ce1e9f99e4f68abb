#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ucm/tensor.hpp"

namespace ucm {

// Thread-local switch for gradient recording (shared by both precisions).
class GradMode {
  public:
    static bool enabled();
    static void set_enabled(bool flag);
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Wengert list. Ops append entries in execution order; backward() walks the
// list once in reverse, so topological order holds by construction. The tape
// is thread-local: one tape per thread of execution.
template <typename Real>
class GradTape {
  public:
    static GradTape& current();

    void record(std::shared_ptr<detail::NodeT<Real>> out, std::function<void()> fn,
                const char* tag = "") {
        entries_.push_back({std::move(out), std::move(fn), tag});
    }

    std::size_t size() const { return entries_.size(); }

    void clear() { entries_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse.
    // Intermediate grads and dead intermediate values are released as soon as
    // their producing entry has run; requires_grad leaves keep accumulating.
    void backward(const TensorT<Real>& loss) {
        if (!loss.defined() || loss.numel() != 1)
            throw ContractError("backward: loss must be a defined scalar tensor");
        if (entries_.empty()) throw ContractError("backward: gradient tape is empty");
        auto loss_node = loss.node();
        loss_node->ensure_grad();
        loss_node->grad[0] += Real(1);
        for (std::size_t i = entries_.size(); i-- > 0;) {
            Entry& e = entries_[i];
            if (!e.out->grad.empty()) {
                if (profiling_) {
                    const auto t0 = std::chrono::steady_clock::now();
                    e.fn();
                    profile_[e.tag] +=
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
                } else {
                    e.fn();
                }
            }
            e.fn = nullptr;  // drop captured input handles
            e.out->release_grad();
            if (e.out.use_count() == 1) e.out->release_data();
        }
        entries_.clear();
    }

    void set_profiling(bool on) { profiling_ = on; }
    const std::map<std::string, double>& profile() const { return profile_; }
    void reset_profile() { profile_.clear(); }

  private:
    struct Entry {
        std::shared_ptr<detail::NodeT<Real>> out;
        std::function<void()> fn;
        const char* tag;
    };
    std::vector<Entry> entries_;
    bool profiling_ = false;
    std::map<std::string, double> profile_;
};

// Convenience used by every op: decide whether the result participates in
// autograd and, if so, register its backward closure. The caller's function
// name doubles as the profiling tag.
template <typename Real, typename Fn>
inline void record_if_tracked(bool any_input_tracked, TensorT<Real>& out, Fn&& backward_fn,
                              const char* tag = __builtin_FUNCTION()) {
    const bool track = GradMode::enabled() && any_input_tracked;
    out.set_requires_grad(track);
    if (track) GradTape<Real>::current().record(out.node(), std::forward<Fn>(backward_fn), tag);
}

template <typename Real>
void backward(const TensorT<Real>& loss) {
    GradTape<Real>::current().backward(loss);
}

}  // namespace ucm
