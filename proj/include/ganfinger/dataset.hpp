#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace ganfinger {

/// An in-memory labeled image dataset. Items [0, train_size) form the
/// training portion, the rest are held-out test items.
struct Dataset {
  std::string tag;
  torch::Tensor images;  ///< [N, C, H, W] float32 in [0, 1]
  torch::Tensor labels;  ///< [N] int64
  std::int64_t train_size = 0;
  std::int64_t num_classes = 0;

  std::int64_t size() const { return labels.size(0); }
  std::int64_t channels() const { return images.size(1); }
  std::int64_t height() const { return images.size(2); }
  std::int64_t width() const { return images.size(3); }

  torch::Tensor images_at(std::span<const std::int64_t> indices) const;
  torch::Tensor labels_at(std::span<const std::int64_t> indices) const;
};

struct DatasetOptions {
  /// Root containing the CIFAR-10 binary batches (data_batch_{1..5}.bin, test_batch.bin).
  std::filesystem::path data_dir;
};

/// Known tags:
///   shapes10       bundled procedural 10-class 3x16x16 set, 10000 train + 2000 test
///   shapes10-mini  same generator, 1000 train + 400 test (unit tests)
///   shapes10-hard  noisier, lower-contrast rendering, 10000 train + 2000 test
///   cifar10        CIFAR-10 binary release under options.data_dir, 50000 + 10000
///   cifar10-10k    first 10000 CIFAR-10 training items + full test batch
/// Throws ConfigError for anything else or when the files are missing.
Dataset load_dataset(const std::string& tag, const DatasetOptions& options = {});

/// Rendering knobs for the shapes generator; defaults are the shapes10 look.
struct ShapeStyle {
  float noise = 0.05F;         ///< per-pixel Gaussian sigma
  float min_contrast = 0.5F;   ///< RGB distance between shape and background
  double min_alpha = 0.8;      ///< shape opacity drawn from [min_alpha, 1]
  double rotation = 0.6;       ///< full range of the rotation angle, radians
  double distractor_rate = 0.3;
};

/// Procedural shapes generator behind the shapes10* tags. Deterministic in
/// (count, seed); class of item i is i % 10 so every slice is balanced.
Dataset make_shapes_dataset(std::int64_t train_count, std::int64_t test_count, std::uint64_t seed,
                            std::string tag, const ShapeStyle& style = {});

/// Reads CIFAR-10 binary records (1 label byte + 3072 pixel bytes each).
void read_cifar_batch(const std::filesystem::path& file, std::vector<std::uint8_t>& labels,
                      std::vector<float>& pixels);

}  // namespace ganfinger
