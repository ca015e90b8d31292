#include "ganfinger/networks.hpp"

#include <array>
#include <mutex>
#include <vector>

#include "ganfinger/error.hpp"
#include "ganfinger/tensor_io.hpp"

namespace ganfinger {

namespace nn = torch::nn;

namespace {

constexpr std::array<ArchInfo, 6> kArchTable{{
    {Arch::small_resnet_20, "small-resnet-20", "fc", 16},
    {Arch::small_resnet_32, "small-resnet-32", "fc", 16},
    {Arch::vgg_16, "vgg-16", "fc", 64},
    {Arch::vgg_19, "vgg-19", "fc", 64},
    {Arch::densenet, "densenet", "fc", 12},
    {Arch::tiny_cnn, "tiny-cnn", "fc", 32},
}};

// Desk-scale defaults when ArchSpec::base_width is 0.
std::int64_t desk_base_width(Arch arch) {
  switch (arch) {
    case Arch::small_resnet_20:
    case Arch::small_resnet_32: return 8;
    case Arch::vgg_16:
    case Arch::vgg_19: return 8;
    case Arch::densenet: return 6;
    case Arch::tiny_cnn: return 16;
  }
  return 8;
}

nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

class BasicBlock : public nn::Module {
 public:
  BasicBlock(std::int64_t in, std::int64_t out, std::int64_t stride)
      : conv1_(register_module("conv1", conv3x3(in, out, stride))),
        bn1_(register_module("bn1", nn::BatchNorm2d(out))),
        conv2_(register_module("conv2", conv3x3(out, out))),
        bn2_(register_module("bn2", nn::BatchNorm2d(out))) {
    if (stride != 1 || in != out) {
      proj_ = register_module("proj", nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
      proj_bn_ = register_module("proj_bn", nn::BatchNorm2d(out));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_(conv1_(x)));
    y = bn2_(conv2_(y));
    auto shortcut = proj_ ? proj_bn_(proj_(x)) : x;
    return torch::relu(y + shortcut);
  }

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv2_;
  nn::BatchNorm2d bn2_;
  nn::Conv2d proj_{nullptr};
  nn::BatchNorm2d proj_bn_{nullptr};
};

// CIFAR-style 6n+2 residual network: three stages of n blocks at widths
// w, 2w, 4w, global average pooling, one affine classifier.
class ResNet : public Network {
 public:
  ResNet(const ArchSpec& spec, std::int64_t blocks_per_stage) : Network(spec) {
    const auto w = effective_base_width(spec);
    stem_ = register_module("stem", conv3x3(spec.in_channels, w));
    stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(w));
    std::int64_t in = w;
    const std::array<std::int64_t, 3> widths{w, 2 * w, 4 * w};
    for (std::size_t stage = 0; stage < widths.size(); ++stage) {
      for (std::int64_t b = 0; b < blocks_per_stage; ++b) {
        const std::int64_t stride = (stage > 0 && b == 0) ? 2 : 1;
        blocks_.push_back(register_module("layer" + std::to_string(stage + 1) + "_" + std::to_string(b),
                                          std::make_shared<BasicBlock>(in, widths[stage], stride)));
        in = widths[stage];
      }
    }
    fc_ = register_module("fc", nn::Linear(in, spec.num_classes));
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = torch::relu(stem_bn_(stem_(x)));
    for (auto& block : blocks_) x = block->forward(x);
    x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
    return fc_(x);
  }

  nn::Linear& final_layer() override { return fc_; }

 private:
  nn::Conv2d stem_{nullptr};
  nn::BatchNorm2d stem_bn_{nullptr};
  std::vector<std::shared_ptr<BasicBlock>> blocks_;
  nn::Linear fc_{nullptr};
};

// VGG with batch norm. Channel counts are the classic configuration scaled
// by base_width / 64; pooling stops once the feature map is 1x1.
class Vgg : public Network {
 public:
  Vgg(const ArchSpec& spec, bool nineteen) : Network(spec) {
    const std::vector<int> cfg16{64, 64, -1, 128, 128, -1, 256, 256, 256, -1, 512, 512, 512, -1, 512, 512, 512, -1};
    const std::vector<int> cfg19{64,  64,  -1,  128, 128, -1,  256, 256, 256, 256, -1,
                                 512, 512, 512, 512, -1,  512, 512, 512, 512, -1};
    const auto& cfg = nineteen ? cfg19 : cfg16;
    const auto w = effective_base_width(spec);
    std::int64_t in = spec.in_channels;
    std::int64_t side = std::min(spec.height, spec.width);
    for (int c : cfg) {
      if (c < 0) {
        if (side > 1) {
          features_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
          side /= 2;
        }
        continue;
      }
      const std::int64_t out = std::max<std::int64_t>(1, c * w / 64);
      features_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)));
      features_->push_back(nn::BatchNorm2d(out));
      features_->push_back(nn::ReLU());
      in = out;
    }
    register_module("features", features_);
    fc_ = register_module("fc", nn::Linear(in, spec.num_classes));
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = features_->forward(x);
    x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
    return fc_(x);
  }

  nn::Linear& final_layer() override { return fc_; }

 private:
  nn::Sequential features_;
  nn::Linear fc_{nullptr};
};

class DenseLayer : public nn::Module {
 public:
  DenseLayer(std::int64_t in, std::int64_t growth)
      : bn1_(register_module("bn1", nn::BatchNorm2d(in))),
        conv1_(register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, 4 * growth, 1).bias(false)))),
        bn2_(register_module("bn2", nn::BatchNorm2d(4 * growth))),
        conv2_(register_module("conv2", conv3x3(4 * growth, growth))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = conv1_(torch::relu(bn1_(x)));
    y = conv2_(torch::relu(bn2_(y)));
    return torch::cat({x, y}, 1);
  }

 private:
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn2_;
  nn::Conv2d conv2_;
};

// DenseNet-BC: three dense blocks joined by compressing transitions.
class DenseNet : public Network {
 public:
  explicit DenseNet(const ArchSpec& spec, std::int64_t layers_per_block = 4) : Network(spec) {
    const auto growth = effective_base_width(spec);
    std::int64_t channels = 2 * growth;
    stem_ = register_module("stem", conv3x3(spec.in_channels, channels));
    for (int block = 0; block < 3; ++block) {
      for (std::int64_t l = 0; l < layers_per_block; ++l) {
        layers_.push_back(register_module("block" + std::to_string(block) + "_" + std::to_string(l),
                                          std::make_shared<DenseLayer>(channels, growth)));
        channels += growth;
      }
      if (block < 2) {
        const auto out = channels / 2;
        transitions_.push_back(register_module("trans" + std::to_string(block) + "_bn", nn::BatchNorm2d(channels)));
        transition_convs_.push_back(register_module("trans" + std::to_string(block) + "_conv",
                                                    nn::Conv2d(nn::Conv2dOptions(channels, out, 1).bias(false))));
        channels = out;
      }
    }
    final_bn_ = register_module("final_bn", nn::BatchNorm2d(channels));
    fc_ = register_module("fc", nn::Linear(channels, spec.num_classes));
    layers_per_block_ = layers_per_block;
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = stem_(x);
    std::size_t layer = 0;
    for (std::size_t block = 0; block < 3; ++block) {
      for (std::int64_t l = 0; l < layers_per_block_; ++l) x = layers_[layer++]->forward(x);
      if (block < 2) {
        x = transition_convs_[block](torch::relu(transitions_[block](x)));
        x = torch::avg_pool2d(x, 2);
      }
    }
    x = torch::relu(final_bn_(x));
    x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
    return fc_(x);
  }

  nn::Linear& final_layer() override { return fc_; }

 private:
  nn::Conv2d stem_{nullptr};
  std::vector<std::shared_ptr<DenseLayer>> layers_;
  std::vector<nn::BatchNorm2d> transitions_;
  std::vector<nn::Conv2d> transition_convs_;
  nn::BatchNorm2d final_bn_{nullptr};
  nn::Linear fc_{nullptr};
  std::int64_t layers_per_block_ = 4;
};

// Two conv/pool stages and a two-layer classifier head.
class TinyCnn : public Network {
 public:
  explicit TinyCnn(const ArchSpec& spec) : Network(spec) {
    const auto w = effective_base_width(spec);
    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(spec.in_channels, w, 3).padding(1)));
    conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(w, 2 * w, 3).padding(1)));
    const auto flat = 2 * w * (spec.height / 4) * (spec.width / 4);
    hidden_ = register_module("hidden", nn::Linear(flat, 4 * w));
    fc_ = register_module("fc", nn::Linear(4 * w, spec.num_classes));
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = torch::max_pool2d(torch::relu(conv1_(x)), 2);
    x = torch::max_pool2d(torch::relu(conv2_(x)), 2);
    x = torch::relu(hidden_(x.flatten(1)));
    return fc_(x);
  }

  nn::Linear& final_layer() override { return fc_; }

 private:
  nn::Conv2d conv1_{nullptr};
  nn::Conv2d conv2_{nullptr};
  nn::Linear hidden_{nullptr};
  nn::Linear fc_{nullptr};
};

std::mutex& init_mutex() {
  static std::mutex m;
  return m;
}

NetworkPtr construct(const ArchSpec& spec) {
  switch (spec.arch) {
    case Arch::small_resnet_20: return std::make_shared<ResNet>(spec, 3);
    case Arch::small_resnet_32: return std::make_shared<ResNet>(spec, 5);
    case Arch::vgg_16: return std::make_shared<Vgg>(spec, false);
    case Arch::vgg_19: return std::make_shared<Vgg>(spec, true);
    case Arch::densenet: return std::make_shared<DenseNet>(spec);
    case Arch::tiny_cnn: return std::make_shared<TinyCnn>(spec);
  }
  throw ConfigError("unsupported architecture");
}

}  // namespace

std::span<const ArchInfo> arch_table() { return kArchTable; }

const ArchInfo& arch_info(Arch arch) {
  for (const auto& info : kArchTable) {
    if (info.arch == arch) return info;
  }
  throw ConfigError("unsupported architecture");
}

std::string_view arch_tag(Arch arch) { return arch_info(arch).tag; }

Arch parse_arch(std::string_view tag) {
  for (const auto& info : kArchTable) {
    if (info.tag == tag) return info.arch;
  }
  throw ConfigError("unknown architecture tag '" + std::string(tag) + "'");
}

std::int64_t effective_base_width(const ArchSpec& spec) {
  return spec.base_width > 0 ? spec.base_width : desk_base_width(spec.arch);
}

nlohmann::json to_json(const ArchSpec& spec) {
  return {{"arch", arch_tag(spec.arch)},        {"in_channels", spec.in_channels},
          {"height", spec.height},              {"width", spec.width},
          {"num_classes", spec.num_classes},    {"base_width", effective_base_width(spec)}};
}

ArchSpec arch_spec_from_json(const nlohmann::json& j) {
  ArchSpec spec;
  spec.arch = parse_arch(j.at("arch").get<std::string>());
  spec.in_channels = j.at("in_channels").get<std::int64_t>();
  spec.height = j.at("height").get<std::int64_t>();
  spec.width = j.at("width").get<std::int64_t>();
  spec.num_classes = j.at("num_classes").get<std::int64_t>();
  spec.base_width = j.at("base_width").get<std::int64_t>();
  return spec;
}

NetworkPtr make_network(const ArchSpec& spec, std::uint64_t seed) {
  if (spec.num_classes < 2 || spec.in_channels < 1 || spec.height < 4 || spec.width < 4) {
    throw ValidationError("architecture spec out of range");
  }
  std::lock_guard lock(init_mutex());
  torch::manual_seed(seed);
  auto net = construct(spec);
  net->eval();
  return net;
}

NetworkPtr clone_network(Network& source) {
  auto copy = make_network(source.spec(), 0);
  load_module_state(*copy, module_state(source));
  return copy;
}

void reinitialize_final_layer(Network& net, std::uint64_t seed) {
  std::lock_guard lock(init_mutex());
  torch::manual_seed(seed);
  net.final_layer()->reset_parameters();
}

bool is_prunable(const std::string& name, const torch::Tensor& tensor) {
  const auto dot = name.rfind('.');
  const auto leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "weight" && tensor.dim() >= 2;
}

bool in_final_layer(const ArchSpec& spec, const std::string& name) {
  const std::string prefix = std::string(arch_info(spec.arch).final_layer) + ".";
  return name.rfind(prefix, 0) == 0;
}

void with_seed(std::uint64_t seed, const std::function<void()>& fn) {
  std::lock_guard lock(init_mutex());
  torch::manual_seed(seed);
  fn();
}

void set_trainable(torch::nn::Module& module, bool trainable) {
  for (auto& p : module.parameters(true)) p.set_requires_grad(trainable);
}

}  // namespace ganfinger
