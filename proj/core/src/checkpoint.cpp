#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "t4g/error.hpp"
#include "t4g/io.hpp"
#include "t4g/micronet.hpp"

namespace t4g {

namespace {

constexpr char kMagic[4] = {'T', '4', 'G', 'C'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::length, path_.string() + ": truncated checkpoint");
  }

  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

ConvLayer layer_from(const std::map<std::string, const NamedTensor*>& byname, const std::string& prefix,
                     Activation act) {
  const auto kernel = byname.find(prefix + ".kernel");
  const auto bias = byname.find(prefix + ".bias");
  if (kernel == byname.end() || bias == byname.end()) {
    fail(ErrorCode::format, "checkpoint is missing " + prefix);
  }
  const std::vector<int>& s = kernel->second->shape;
  if (s.size() != 4 || s[0] != s[1] || bias->second->shape.size() != 1 || bias->second->shape[0] != s[3]) {
    fail(ErrorCode::format, "checkpoint tensor " + prefix + " has a bad shape");
  }
  ConvLayer layer = ConvLayer::zeros(s[0], s[2], s[3], act);
  if (kernel->second->data.size() != layer.kernel.size() || bias->second->data.size() != layer.bias.size()) {
    fail(ErrorCode::length, "checkpoint tensor " + prefix + " has the wrong length");
  }
  layer.kernel = kernel->second->data;
  layer.bias = bias->second->data;
  return layer;
}

}  // namespace

std::vector<NamedTensor> model_tensors(const ToyModel& model) {
  ToyModel copy = model;
  std::vector<NamedTensor> out;
  for (const ParamRef& p : parameters(copy)) out.push_back({p.name, p.shape, *p.values});
  return out;
}

ToyModel model_from_tensors(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> byname;
  for (const NamedTensor& t : tensors) {
    if (!byname.emplace(t.name, &t).second) fail(ErrorCode::format, "duplicate checkpoint tensor " + t.name);
  }
  ToyModel model;
  model.encoder = layer_from(byname, "encoder", Activation::relu);
  for (int i = 0; byname.contains("refiner." + std::to_string(i) + ".kernel"); ++i) {
    model.refiner.layers.push_back(layer_from(byname, "refiner." + std::to_string(i), Activation::relu));
  }
  if (model.refiner.layers.empty()) fail(ErrorCode::format, "checkpoint has no refiner layers");
  model.zero.layer = layer_from(byname, "zero", Activation::none);
  model.head = layer_from(byname, "head", Activation::none);
  if (byname.size() != 2 * (model.refiner.layers.size() + 3)) {
    fail(ErrorCode::format, "checkpoint has unexpected tensors");
  }
  return model;
}

void write_checkpoint(const ToyModel& model, const std::filesystem::path& path) {
  std::string out(kMagic, 4);
  put_u64(out, kFormatVersion);
  const std::vector<NamedTensor> tensors = model_tensors(model);
  put_u64(out, tensors.size());
  for (const NamedTensor& t : tensors) {
    put_u64(out, t.name.size());
    out += t.name;
    put_u64(out, t.shape.size());
    for (int d : t.shape) put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  write_text_file(path, out);
}

ToyModel read_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::format, path.string() + ": bad magic");
  }
  Reader in(bytes, path);
  in.text(4);
  if (in.u64() != kFormatVersion) fail(ErrorCode::format, path.string() + ": unsupported version");
  const std::uint64_t count = in.u64();
  std::vector<NamedTensor> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint64_t name_len = in.u64();
    if (name_len > 4096) fail(ErrorCode::format, path.string() + ": implausible tensor name length");
    t.name = in.text(name_len);
    const std::uint64_t rank = in.u64();
    if (rank > 8) fail(ErrorCode::format, path.string() + ": implausible tensor rank");
    std::uint64_t elements = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = in.u64();
      if (dim > (1u << 24)) fail(ErrorCode::format, path.string() + ": implausible tensor dimension");
      t.shape.push_back(static_cast<int>(dim));
      elements *= dim;
    }
    if (elements > (std::uint64_t{1} << 32)) fail(ErrorCode::format, path.string() + ": tensor too large");
    t.data.resize(elements);
    for (double& v : t.data) v = std::bit_cast<double>(in.u64());
    tensors.push_back(std::move(t));
  }
  if (!in.done()) fail(ErrorCode::length, path.string() + ": trailing bytes");
  return model_from_tensors(tensors);
}

std::string loss_log_csv(const std::vector<StepLog>& log) {
  std::ostringstream out;
  out << "step,loss_diff,loss_corr,joint\n";
  char buf[160];
  for (const StepLog& row : log) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(row.step),
                  row.losses.loss_diff, row.losses.loss_corr, row.losses.joint);
    out << buf;
  }
  return out.str();
}

}  // namespace t4g
