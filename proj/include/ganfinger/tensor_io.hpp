#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace ganfinger {

/// Ordered list of named tensors; the unit persisted by the GFW1 format.
using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

/// GFW1 layout (all integers little-endian):
///   magic "GFW1" | u32 count | count x entry
///   entry: u32 name_len | name bytes | u8 dtype (0=float32, 1=int64)
///          | u32 ndim | ndim x i64 dim | raw element data
void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_tensors(const std::filesystem::path& path);

/// Parameters followed by buffers, in registration order.
NamedTensors module_state(const torch::nn::Module& module);
/// Copies `state` into the module's parameters/buffers by name. Every
/// parameter and buffer must be present with a matching shape.
void load_module_state(torch::nn::Module& module, const NamedTensors& state);

void save_module(const torch::nn::Module& module, const std::filesystem::path& path);
void load_module(torch::nn::Module& module, const std::filesystem::path& path);

/// Deep copy of every tensor.
NamedTensors clone_state(const NamedTensors& state);
/// Bit-exact equality of two states (names, shapes, dtypes, bytes).
bool states_equal(const NamedTensors& a, const NamedTensors& b);

}  // namespace ganfinger
