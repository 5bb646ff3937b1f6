#include "reform/nn/checkpoint.hpp"

#include <unordered_map>

#include "reform/common/binary_io.hpp"
#include "reform/common/error.hpp"

namespace reform::nn {

std::string encode_checkpoint(const std::vector<NamedTensor>& entries) {
  binary::Writer w;
  w.bytes("RFCK");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const NamedTensor& e : entries) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name);
    const auto& shape = e.value.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : e.value.data()) w.f64(v);
  }
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  binary::Reader r(bytes);
  if (r.bytes(4, "magic") != "RFCK") throw FormatError("bad checkpoint magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32("entry count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = r.u32("name length");
    std::string name(r.bytes(len, "name"));
    const std::uint32_t rank = r.u32("rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32("dimension");
      n *= d;
    }
    if (n * 8 > r.remaining()) {
      throw FormatError("truncated file while reading data of '" + name + "'", r.offset());
    }
    std::vector<double> data(n);
    for (double& v : data) v = r.f64("tensor data");
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last entry", r.offset());
  return out;
}

std::vector<NamedTensor> snapshot(const std::vector<const Parameter*>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back({p->name, p->value});
  return out;
}

std::vector<NamedTensor> snapshot(const std::vector<Parameter*>& params) {
  return snapshot(std::vector<const Parameter*>(params.begin(), params.end()));
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries) {
  binary::write_file(path, encode_checkpoint(entries));
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  return decode_checkpoint(binary::read_file(path));
}

void restore(const std::vector<Parameter*>& params, const std::vector<NamedTensor>& entries) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const NamedTensor& e : entries) by_name.emplace(e.name, &e.value);
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ContractError("checkpoint has no entry '" + p->name + "'");
    if (!it->second->same_shape(p->value)) {
      throw DimensionError("checkpoint entry '" + p->name + "' has shape " +
                           shape_string(it->second->shape()) + ", expected " +
                           shape_string(p->value.shape()));
    }
    p->value = *it->second;
  }
}

}  // namespace reform::nn
