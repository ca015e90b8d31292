#include <fstream>

#include "ganfinger/error.hpp"
#include "ganfinger/fingerprint_gan.hpp"
#include "ganfinger/tensor_io.hpp"

namespace ganfinger {

namespace {

constexpr const char* kFormat = "ganfinger.fingerprints/1";

template <typename T>
T field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name)) throw IntegrityError(name, "missing");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(name, e.what());
  }
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
  auto p = bin_path;
  p.replace_extension(".json");
  return p;
}

void save_fingerprints(const FingerprintSet& set, const std::filesystem::path& bin_path) {
  if (set.pairs.empty()) throw ValidationError("refusing to save an empty fingerprint set");
  std::vector<torch::Tensor> xs;
  std::vector<torch::Tensor> xps;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : set.pairs) {
    validate_pair(p);
    xs.push_back(p.x.to(torch::kFloat32));
    xps.push_back(p.x_prime.to(torch::kFloat32));
    pairs.push_back({{"source_index", p.source_index},
                     {"y_v_x", p.y_v_x},
                     {"y_v_xp", p.y_v_xp},
                     {"perturbation_norm", p.perturbation_norm}});
  }
  const auto x = torch::stack(xs);
  write_tensors(bin_path, {{"x", x}, {"x_prime", torch::stack(xps)}});

  const std::vector<std::int64_t> shape(x.sizes().begin() + 1, x.sizes().end());
  const nlohmann::json doc = {{"format", kFormat},
                              {"victim_id", set.victim_id},
                              {"k", set.pairs.size()},
                              {"shape", shape},
                              {"created_at", set.created_at},
                              {"generator_ref", set.generator_ref},
                              {"config_hash", config_hash(set.gan_config)},
                              {"gan_config", to_json(set.gan_config)},
                              {"pairs", pairs}};
  const auto side = sidecar_path(bin_path);
  const auto tmp = side.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ValidationError("cannot write " + tmp);
    out << doc.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, side);
}

FingerprintSet load_fingerprints(const std::filesystem::path& bin_path) {
  const auto side = sidecar_path(bin_path);
  std::ifstream in(side);
  if (!in) throw NotFoundError("fingerprint sidecar not found: " + side.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError("sidecar", e.what());
  }
  if (field<std::string>(doc, "format") != kFormat) throw IntegrityError("format", "unsupported fingerprint format");

  FingerprintSet set;
  set.victim_id = field<std::string>(doc, "victim_id");
  set.created_at = field<std::string>(doc, "created_at");
  set.generator_ref = field<std::string>(doc, "generator_ref");
  try {
    set.gan_config = gan_config_from_json(field<nlohmann::json>(doc, "gan_config"));
  } catch (const Error& e) {
    throw IntegrityError("gan_config", e.what());
  }
  if (config_hash(set.gan_config) != field<std::string>(doc, "config_hash")) {
    throw IntegrityError("config_hash", "does not match gan_config");
  }
  const auto k = field<std::size_t>(doc, "k");
  const auto pairs = field<nlohmann::json>(doc, "pairs");
  if (!pairs.is_array() || pairs.size() != k) throw IntegrityError("pairs", "length differs from k");

  torch::Tensor x;
  torch::Tensor xp;
  for (auto& [name, t] : read_tensors(bin_path)) {
    if (name == "x") x = t;
    if (name == "x_prime") xp = t;
  }
  if (!x.defined()) throw IntegrityError("x", "missing tensor");
  if (!xp.defined()) throw IntegrityError("x_prime", "missing tensor");
  if (x.sizes() != xp.sizes() || x.size(0) != static_cast<std::int64_t>(k)) {
    throw IntegrityError("x", "tensor shape disagrees with sidecar");
  }
  const auto shape = field<std::vector<std::int64_t>>(doc, "shape");
  if (!std::equal(shape.begin(), shape.end(), x.sizes().begin() + 1, x.sizes().end()) ||
      shape.size() + 1 != static_cast<std::size_t>(x.dim())) {
    throw IntegrityError("shape", "tensor shape disagrees with sidecar");
  }
  for (std::size_t i = 0; i < k; ++i) {
    const auto& pj = pairs[i];
    FingerprintPair p;
    p.source_index = field<std::int64_t>(pj, "source_index");
    p.y_v_x = field<std::int64_t>(pj, "y_v_x");
    p.y_v_xp = field<std::int64_t>(pj, "y_v_xp");
    p.perturbation_norm = field<double>(pj, "perturbation_norm");
    p.x = x[static_cast<std::int64_t>(i)].clone();
    p.x_prime = xp[static_cast<std::int64_t>(i)].clone();
    try {
      validate_pair(p);
    } catch (const InvariantError& e) {
      throw IntegrityError("pairs", e.what());
    }
    set.pairs.push_back(std::move(p));
  }
  return set;
}

}  // namespace ganfinger
