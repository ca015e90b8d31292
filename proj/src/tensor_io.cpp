#include "ganfinger/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "ganfinger/error.hpp"

namespace ganfinger {

static_assert(std::endian::native == std::endian::little, "GFW1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'F', 'W', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* field) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw IntegrityError(field, "unexpected end of file");
  return value;
}

std::uint8_t dtype_code(const torch::Tensor& t) {
  if (t.scalar_type() == torch::kFloat32) return 0;
  if (t.scalar_type() == torch::kInt64) return 1;
  throw ValidationError("unsupported tensor dtype for GFW1");
}

}  // namespace

void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + tmp);
    out.write(kMagic, 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
      auto t = tensor.detach().contiguous().cpu();
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint8_t>(out, dtype_code(t));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
      for (auto d : t.sizes()) put<std::int64_t>(out, d);
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    }
    if (!out) throw ValidationError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

NamedTensors read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("tensor file not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IntegrityError("magic", "not a GFW1 file");
  const auto count = get<std::uint32_t>(in, "count");
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, "name_len");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw IntegrityError("name", "unexpected end of file");
    const auto code = get<std::uint8_t>(in, "dtype");
    if (code > 1) throw IntegrityError("dtype", "unknown dtype code for " + name);
    const auto ndim = get<std::uint32_t>(in, "ndim");
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = get<std::int64_t>(in, "dims");
    auto t = torch::empty(dims, code == 0 ? torch::kFloat32 : torch::kInt64);
    if (!in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()))) {
      throw IntegrityError("data", "truncated tensor " + name);
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

NamedTensors module_state(const torch::nn::Module& module) {
  NamedTensors out;
  for (const auto& p : module.named_parameters(true)) out.emplace_back(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) out.emplace_back(b.key(), b.value());
  return out;
}

void load_module_state(torch::nn::Module& module, const NamedTensors& state) {
  std::unordered_map<std::string, const torch::Tensor*> by_name;
  for (const auto& [name, t] : state) by_name.emplace(name, &t);
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IntegrityError(name, "missing from stored state");
    if (it->second->sizes() != target.sizes()) throw IntegrityError(name, "shape mismatch");
    target.copy_(*it->second);
  };
  for (auto& p : module.named_parameters(true)) assign(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) assign(b.key(), b.value());
}

void save_module(const torch::nn::Module& module, const std::filesystem::path& path) {
  write_tensors(path, module_state(module));
}

void load_module(torch::nn::Module& module, const std::filesystem::path& path) {
  load_module_state(module, read_tensors(path));
}

NamedTensors clone_state(const NamedTensors& state) {
  NamedTensors out;
  out.reserve(state.size());
  for (const auto& [name, t] : state) out.emplace_back(name, t.detach().clone());
  return out;
}

bool states_equal(const NamedTensors& a, const NamedTensors& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ta = a[i].second.contiguous();
    const auto& tb = b[i].second.contiguous();
    if (a[i].first != b[i].first || ta.sizes() != tb.sizes() || ta.scalar_type() != tb.scalar_type()) return false;
    if (std::memcmp(ta.data_ptr(), tb.data_ptr(), ta.nbytes()) != 0) return false;
  }
  return true;
}

}  // namespace ganfinger
