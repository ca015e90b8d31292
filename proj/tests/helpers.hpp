#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <torch/torch.h>

#include "ganfinger/networks.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& stem) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Network whose logits are a fixed function of the first pixel: class
/// round(x[0,0,0] * 10) mod classes gets logit 1, every other class 0.
/// Used where a test needs a predictor with hand-known answers.
class PixelCodedNet : public ganfinger::Network {
 public:
  explicit PixelCodedNet(ganfinger::ArchSpec spec) : Network(spec) {
    fc_ = register_module("fc", torch::nn::Linear(1, spec.num_classes));
  }
  torch::Tensor forward(torch::Tensor x) override {
    const auto code = (x.select(1, 0).select(1, 0).select(1, 0) * 10).round().to(torch::kInt64);
    const auto cls = code.remainder(spec().num_classes);
    return torch::one_hot(cls, spec().num_classes).to(torch::kFloat32);
  }
  torch::nn::Linear& final_layer() override { return fc_; }

 private:
  torch::nn::Linear fc_{nullptr};
};

/// Predicts the same class for every input.
class ConstantNet : public ganfinger::Network {
 public:
  ConstantNet(ganfinger::ArchSpec spec, std::int64_t cls) : Network(spec), cls_(cls) {
    fc_ = register_module("fc", torch::nn::Linear(1, spec.num_classes));
  }
  torch::Tensor forward(torch::Tensor x) override {
    auto out = torch::zeros({x.size(0), spec().num_classes});
    out.select(1, cls_).fill_(5.0);
    return out;
  }
  torch::nn::Linear& final_layer() override { return fc_; }

 private:
  std::int64_t cls_;
  torch::nn::Linear fc_{nullptr};
};

/// Input whose first pixel encodes class `cls` for PixelCodedNet.
inline torch::Tensor coded_input(std::int64_t cls, const ganfinger::ArchSpec& spec) {
  auto x = torch::full({spec.in_channels, spec.height, spec.width}, 0.5F);
  x[0][0][0] = static_cast<float>(cls) / 10.0F;
  return x;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testing
