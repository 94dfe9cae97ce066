#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "diffctl/eval/harness.hpp"
#include "diffctl/sampler/control.hpp"

namespace diffctl::eval {

inline std::vector<double> to_doubles(const torch::Tensor& t) {
    auto c = t.to(torch::kFloat64).contiguous();
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

/// Evaluation batch from generated samples; `test_index[i]` is the test row
/// that sample i was conditioned on.
inline ControlBatch to_control_batch(const sampler::ControlSample& s, std::vector<std::int64_t> test_index,
                                     std::vector<std::uint64_t> seeds = {}) {
    if (static_cast<std::int64_t>(test_index.size()) != s.w.size(0))
        throw ShapeError("to_control_batch: one test index per sample required");
    ControlBatch b;
    b.test_index = std::move(test_index);
    b.w = to_doubles(s.w);
    b.u = to_doubles(s.u);
    b.seeds = std::move(seeds);
    return b;
}

} // namespace diffctl::eval
