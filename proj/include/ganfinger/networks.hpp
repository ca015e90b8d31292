#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>
#include <torch/torch.h>

namespace ganfinger {

enum class Arch { small_resnet_20, small_resnet_32, vgg_16, vgg_19, densenet, tiny_cnn };

/// Everything needed to rebuild a network with identical parameter layout.
struct ArchSpec {
  Arch arch = Arch::tiny_cnn;
  std::int64_t in_channels = 3;
  std::int64_t height = 16;
  std::int64_t width = 16;
  std::int64_t num_classes = 10;
  /// Base channel count (ResNet first stage, tiny-cnn first conv, VGG first
  /// block) or growth rate for densenet. 0 selects the per-arch default.
  std::int64_t base_width = 0;

  bool operator==(const ArchSpec&) const = default;
};

/// Per-architecture constants. `final_layer` names the classification affine
/// layer that FTLL/RTLL touch; every arch registers it under that name.
struct ArchInfo {
  Arch arch;
  std::string_view tag;
  std::string_view final_layer;
  std::int64_t full_base_width;
};

std::span<const ArchInfo> arch_table();
const ArchInfo& arch_info(Arch arch);
std::string_view arch_tag(Arch arch);
/// Throws ConfigError for unknown tags.
Arch parse_arch(std::string_view tag);
std::int64_t effective_base_width(const ArchSpec& spec);

nlohmann::json to_json(const ArchSpec& spec);
ArchSpec arch_spec_from_json(const nlohmann::json& j);

/// Image classifier producing logits. Implementations register the final
/// affine layer as `arch_info(spec().arch).final_layer`.
class Network : public torch::nn::Module {
 public:
  explicit Network(ArchSpec spec) : spec_(spec) {}
  virtual torch::Tensor forward(torch::Tensor x) = 0;
  virtual torch::nn::Linear& final_layer() = 0;
  const ArchSpec& spec() const noexcept { return spec_; }

 private:
  ArchSpec spec_;
};

using NetworkPtr = std::shared_ptr<Network>;

/// Builds a freshly initialized network. Initialization is a pure function
/// of (spec, seed); construction is serialized across threads.
NetworkPtr make_network(const ArchSpec& spec, std::uint64_t seed);
/// Same architecture and identical parameters/buffers.
NetworkPtr clone_network(Network& source);
/// Re-draws the final affine layer's parameters from the default initializer.
void reinitialize_final_layer(Network& net, std::uint64_t seed);

/// Names of the tensors magnitude pruning applies to: conv and linear
/// weights (dim >= 2). Biases and normalization parameters are exempt.
bool is_prunable(const std::string& name, const torch::Tensor& tensor);
/// True when `name` belongs to the final affine layer of `spec`.
bool in_final_layer(const ArchSpec& spec, const std::string& name);

void set_trainable(torch::nn::Module& module, bool trainable);

/// Runs `fn` with torch's global generator seeded to `seed`, holding the
/// lock that serializes all seeded initialization.
void with_seed(std::uint64_t seed, const std::function<void()>& fn);

}  // namespace ganfinger
