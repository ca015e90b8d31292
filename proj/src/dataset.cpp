#include "ganfinger/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include "ganfinger/error.hpp"

namespace ganfinger {

torch::Tensor Dataset::images_at(std::span<const std::int64_t> indices) const {
  auto idx = torch::from_blob(const_cast<std::int64_t*>(indices.data()),
                              {static_cast<std::int64_t>(indices.size())}, torch::kInt64);
  return images.index_select(0, idx);
}

torch::Tensor Dataset::labels_at(std::span<const std::int64_t> indices) const {
  auto idx = torch::from_blob(const_cast<std::int64_t*>(indices.data()),
                              {static_cast<std::int64_t>(indices.size())}, torch::kInt64);
  return labels.index_select(0, idx);
}

namespace {

constexpr std::int64_t kShapeClasses = 10;
constexpr std::int64_t kShapeSide = 16;
constexpr std::uint64_t kShapesSeed = 0x5a17e5u;

// Shape membership in the shape's local frame, where the unit square [-1,1]^2
// is the nominal extent.
bool inside_shape(int cls, double u, double v) {
  const double r = std::hypot(u, v);
  const double box = std::max(std::abs(u), std::abs(v));
  switch (cls) {
    case 0: return r < 1.0;
    case 1: return r > 0.55 && r < 1.0;
    case 2: return box < 0.85;
    case 3: return box > 0.5 && box < 0.9;
    case 4: return v > -0.9 && v < 0.8 && std::abs(u) < (v + 0.9) * 0.6;
    case 5: return (std::abs(u) < 0.3 && std::abs(v) < 1.0) || (std::abs(v) < 0.3 && std::abs(u) < 1.0);
    case 6: return (std::abs(u - v) < 0.4 || std::abs(u + v) < 0.4) && box < 0.95;
    case 7: return box < 1.0 && static_cast<int>(std::floor((v + 1.0) * 2.5)) % 2 == 0;
    case 8: return box < 1.0 && static_cast<int>(std::floor((u + 1.0) * 2.5)) % 2 == 0;
    case 9:
      return box < 1.0 &&
             (static_cast<int>(std::floor((u + 1.0) * 2.0)) + static_cast<int>(std::floor((v + 1.0) * 2.0))) % 2 == 0;
    default: return false;
  }
}

using Rgb = std::array<float, 3>;

Rgb random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> unit(0.0F, 1.0F);
  return {unit(rng), unit(rng), unit(rng)};
}

float color_distance(const Rgb& a, const Rgb& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

void render_shape(int cls, const ShapeStyle& style, std::mt19937_64& rng, float* out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<float> noise(0.0F, style.noise);
  const double side = static_cast<double>(kShapeSide);

  Rgb bg = random_color(rng);
  Rgb fg = random_color(rng);
  while (color_distance(fg, bg) < style.min_contrast) fg = random_color(rng);
  const float alpha = static_cast<float>(style.min_alpha + (1.0 - style.min_alpha) * unit(rng));
  const double gx = 0.4 * (unit(rng) - 0.5);
  const double gy = 0.4 * (unit(rng) - 0.5);

  const double cx = side / 2.0 + 3.0 * (unit(rng) - 0.5);
  const double cy = side / 2.0 + 3.0 * (unit(rng) - 0.5);
  const double scale = 5.0 + 1.5 * unit(rng);
  const double theta = style.rotation * (unit(rng) - 0.5);
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);

  const bool distractor = unit(rng) < style.distractor_rate;
  const Rgb dcolor = random_color(rng);
  const double dx = side * unit(rng);
  const double dy = side * unit(rng);
  const double dr = 1.5 + unit(rng);

  const auto plane = static_cast<std::size_t>(kShapeSide * kShapeSide);
  for (std::int64_t i = 0; i < kShapeSide; ++i) {
    for (std::int64_t j = 0; j < kShapeSide; ++j) {
      const double px = static_cast<double>(j) + 0.5;
      const double py = static_cast<double>(i) + 0.5;
      const double du = (px - cx) / scale;
      const double dv = (py - cy) / scale;
      const double u = cs * du + sn * dv;
      const double v = -sn * du + cs * dv;
      const bool on = inside_shape(cls, u, v);
      const bool blob = distractor && std::hypot(px - dx, py - dy) < dr;
      const float ramp = static_cast<float>(gx * (px / side - 0.5) + gy * (py / side - 0.5));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        float value = bg[ch] + ramp;
        if (on) value = alpha * fg[ch] + (1.0F - alpha) * value;
        if (blob) value = dcolor[ch];
        value += noise(rng);
        out[ch * plane + static_cast<std::size_t>(i * kShapeSide + j)] = std::clamp(value, 0.0F, 1.0F);
      }
    }
  }
}

Dataset load_cifar(const std::filesystem::path& root, std::int64_t train_limit, std::string tag) {
  std::vector<std::uint8_t> labels;
  std::vector<float> pixels;
  for (int b = 1; b <= 5; ++b) {
    read_cifar_batch(root / ("data_batch_" + std::to_string(b) + ".bin"), labels, pixels);
  }
  const auto full_train = static_cast<std::int64_t>(labels.size());
  const std::int64_t train = std::min(train_limit, full_train);
  labels.resize(static_cast<std::size_t>(train));
  pixels.resize(static_cast<std::size_t>(train) * 3072);
  read_cifar_batch(root / "test_batch.bin", labels, pixels);

  const auto n = static_cast<std::int64_t>(labels.size());
  Dataset ds;
  ds.tag = std::move(tag);
  ds.images = torch::from_blob(pixels.data(), {n, 3, 32, 32}, torch::kFloat32).clone();
  std::vector<std::int64_t> wide(labels.begin(), labels.end());
  ds.labels = torch::from_blob(wide.data(), {n}, torch::kInt64).clone();
  ds.train_size = train;
  ds.num_classes = 10;
  return ds;
}

}  // namespace

void read_cifar_batch(const std::filesystem::path& file, std::vector<std::uint8_t>& labels,
                      std::vector<float>& pixels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open CIFAR-10 batch " + file.string());
  constexpr std::size_t kRecord = 1 + 3072;
  std::vector<std::uint8_t> record(kRecord);
  while (in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(kRecord))) {
    if (record[0] > 9) throw IntegrityError("label", "CIFAR-10 label out of range in " + file.string());
    labels.push_back(record[0]);
    for (std::size_t i = 1; i < kRecord; ++i) pixels.push_back(static_cast<float>(record[i]) / 255.0F);
  }
  if (in.gcount() != 0) throw IntegrityError("record", "truncated CIFAR-10 record in " + file.string());
}

Dataset make_shapes_dataset(std::int64_t train_count, std::int64_t test_count, std::uint64_t seed, std::string tag,
                            const ShapeStyle& style) {
  const std::int64_t n = train_count + test_count;
  const std::int64_t item = 3 * kShapeSide * kShapeSide;
  std::vector<float> pixels(static_cast<std::size_t>(n * item));
  std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
  std::mt19937_64 rng(seed);
  for (std::int64_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % kShapeClasses);
    labels[static_cast<std::size_t>(i)] = cls;
    render_shape(cls, style, rng, pixels.data() + i * item);
  }
  Dataset ds;
  ds.tag = std::move(tag);
  ds.images = torch::from_blob(pixels.data(), {n, 3, kShapeSide, kShapeSide}, torch::kFloat32).clone();
  ds.labels = torch::from_blob(labels.data(), {n}, torch::kInt64).clone();
  ds.train_size = train_count;
  ds.num_classes = kShapeClasses;
  return ds;
}

Dataset load_dataset(const std::string& tag, const DatasetOptions& options) {
  if (tag == "shapes10") return make_shapes_dataset(10000, 2000, kShapesSeed, tag);
  if (tag == "shapes10-mini") return make_shapes_dataset(1000, 400, kShapesSeed, tag);
  if (tag == "shapes10-hard") {
    ShapeStyle hard;
    hard.noise = 0.08F;
    hard.min_contrast = 0.4F;
    hard.min_alpha = 0.65;
    hard.rotation = 0.9;
    hard.distractor_rate = 0.5;
    return make_shapes_dataset(10000, 2000, kShapesSeed, tag, hard);
  }
  if (tag == "cifar10") return load_cifar(options.data_dir, 50000, tag);
  if (tag == "cifar10-10k") return load_cifar(options.data_dir, 10000, tag);
  throw ConfigError("unknown dataset tag '" + tag + "'");
}

}  // namespace ganfinger
