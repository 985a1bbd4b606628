#include "ponita/checkpoint.hpp"

#include "ponita/binary_io.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>

namespace ponita::checkpoint {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr const char* kMetaPrefix = "meta/";

void write_tensor(std::ostream& os, const std::string& name, const ad::Array<double>& a) {
  if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw std::invalid_argument("tensor name too long");
  if (a.rank() > std::numeric_limits<std::uint8_t>::max()) throw std::invalid_argument("tensor rank too large");
  binary::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  binary::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(a.rank()));
  for (auto e : a.shape) binary::write_le<std::uint64_t>(os, e);
  for (double v : a.data) binary::write_le<double>(os, v);
}

}  // namespace

void write(const Checkpoint& ck, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  binary::write_magic(os, "PCKP");
  binary::write_le<std::uint32_t>(os, kVersion);
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.tensors.size() + ck.meta.size()));
  for (const auto& [name, value] : ck.meta) write_tensor(os, kMetaPrefix + name, ad::Array<double>::scalar(value));
  for (const auto& [name, a] : ck.tensors) write_tensor(os, name, a);
  if (!os) throw std::runtime_error("failed writing " + file.string());
}

Checkpoint read(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  binary::expect_magic(is, "PCKP");
  const auto version = binary::read_le<std::uint32_t>(is);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto count = binary::read_le<std::uint32_t>(is);
  Checkpoint ck;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = binary::read_le<std::uint16_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("truncated checkpoint");
    const auto rank = binary::read_le<std::uint8_t>(is);
    ad::Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(binary::read_le<std::uint64_t>(is));
    std::vector<double> data(ad::numel(shape));
    for (auto& v : data) v = binary::read_le<double>(is);
    if (name.starts_with(kMetaPrefix) && rank == 0) {
      ck.meta[name.substr(std::string(kMetaPrefix).size())] = data[0];
    } else {
      ck.tensors.emplace(std::move(name), ad::Array<double>(std::move(shape), std::move(data)));
    }
  }
  return ck;
}

template <class T>
Checkpoint capture(const ad::ParameterStore<T>& params, std::map<std::string, double> meta) {
  Checkpoint ck;
  ck.meta = std::move(meta);
  for (const auto& p : params) ck.tensors.emplace(p.name, p.value.template cast<double>());
  return ck;
}

template <class T>
void restore(const Checkpoint& ck, ad::ParameterStore<T>& params) {
  for (auto& p : params) {
    auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end()) throw std::runtime_error("checkpoint has no tensor " + p.name);
    if (it->second.shape != p.value.shape) {
      throw std::runtime_error("checkpoint tensor " + p.name + " has shape " + ad::shape_string(it->second.shape) +
                               ", model expects " + ad::shape_string(p.value.shape));
    }
    p.value = it->second.template cast<T>();
  }
}

double meta_or(const Checkpoint& ck, const std::string& key, double fallback) {
  auto it = ck.meta.find(key);
  return it == ck.meta.end() ? fallback : it->second;
}

double meta_at(const Checkpoint& ck, const std::string& key) {
  auto it = ck.meta.find(key);
  if (it == ck.meta.end()) throw std::runtime_error("checkpoint is missing meta/" + key);
  return it->second;
}

template Checkpoint capture<float>(const ad::ParameterStore<float>&, std::map<std::string, double>);
template Checkpoint capture<double>(const ad::ParameterStore<double>&, std::map<std::string, double>);
template void restore<float>(const Checkpoint&, ad::ParameterStore<float>&);
template void restore<double>(const Checkpoint&, ad::ParameterStore<double>&);

}  // namespace ponita::checkpoint
