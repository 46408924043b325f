#include "xbarvit/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <stdexcept>

namespace xbarvit {

namespace {

constexpr const char* kTensorNames[] = {"w_q",   "w_k",      "w_v",      "w_proj",   "mlp_1",
                                        "mlp_2", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias"};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  void need(std::size_t n) const {
    if (buf.size() - pos < n) throw std::runtime_error("tensor file: truncated at byte " + std::to_string(pos));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{buf[pos++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[pos++]} << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  bool done() const { return pos == buf.size(); }

  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

std::uint64_t element_count(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

TensorRecord to_record(const std::string& name, const Matrix& m, bool vector) {
  TensorRecord r;
  r.name = name;
  r.dims = vector ? std::vector<std::uint64_t>{m.cols()} : std::vector<std::uint64_t>{m.rows(), m.cols()};
  r.values.reserve(m.size());
  for (double v : m.values()) r.values.push_back(static_cast<float>(v));
  return r;
}

Matrix to_matrix(const TensorRecord& r) {
  std::size_t rows = 1;
  std::size_t cols = 0;
  if (r.dims.size() == 1) {
    cols = r.dims[0];
  } else if (r.dims.size() == 2) {
    rows = r.dims[0];
    cols = r.dims[1];
  } else {
    throw std::runtime_error("tensor file: " + r.name + " must have rank 1 or 2");
  }
  std::vector<double> data(r.values.begin(), r.values.end());
  return Matrix(rows, cols, std::move(data));
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(const std::vector<TensorRecord>& records) {
  std::set<std::string> names;
  Writer w;
  w.bytes(kTensorMagic, 4);
  w.u32(kTensorVersion);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (!names.insert(r.name).second) throw std::invalid_argument("tensor file: duplicate name " + r.name);
    if (element_count(r.dims) != r.values.size())
      throw std::invalid_argument("tensor file: " + r.name + " value count does not match its dims");
    w.u32(static_cast<std::uint32_t>(r.name.size()));
    w.bytes(r.name.data(), r.name.size());
    w.u32(static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) w.u64(d);
    for (float v : r.values) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  return std::move(w.out);
}

std::vector<TensorRecord> decode_tensors(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kTensorMagic, 4)) throw std::runtime_error("tensor file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kTensorVersion) throw std::runtime_error("tensor file: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<TensorRecord> out;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    rec.name = r.str(r.u32());
    if (!names.insert(rec.name).second) throw std::runtime_error("tensor file: duplicate name " + rec.name);
    const std::uint32_t rank = r.u32();
    for (std::uint32_t k = 0; k < rank; ++k) rec.dims.push_back(r.u64());
    const std::uint64_t n = element_count(rec.dims);
    if (n > (bytes.size() - r.pos) / 4) throw std::runtime_error("tensor file: " + rec.name + " exceeds file size");
    rec.values.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) rec.values.push_back(std::bit_cast<float>(r.u32()));
    out.push_back(std::move(rec));
  }
  if (!r.done()) throw std::runtime_error("tensor file: trailing bytes");
  return out;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
  const auto bytes = encode_tensors(records);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::vector<TensorRecord> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

std::vector<TensorRecord> model_to_records(const Model& model) {
  std::vector<TensorRecord> out;
  for (std::size_t i = 0; i < model.encoders.size(); ++i) {
    const EncoderWeights& e = model.encoders[i];
    const std::string p = "encoder." + std::to_string(i) + ".";
    const Matrix* mats[] = {&e.w_q,   &e.w_k,      &e.w_v,      &e.w_proj,   &e.mlp_1,
                            &e.mlp_2, &e.ln1_gain, &e.ln1_bias, &e.ln2_gain, &e.ln2_bias};
    for (int k = 0; k < 10; ++k) out.push_back(to_record(p + kTensorNames[k], *mats[k], k >= 6));
  }
  return out;
}

Model model_from_records(const std::vector<TensorRecord>& records, const ModelConfig& shape) {
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;

  Model model;
  model.config = shape;
  for (int i = 0;; ++i) {
    const std::string p = "encoder." + std::to_string(i) + ".";
    if (!by_name.count(p + "w_q")) break;
    EncoderWeights e;
    Matrix* mats[] = {&e.w_q,   &e.w_k,      &e.w_v,      &e.w_proj,   &e.mlp_1,
                      &e.mlp_2, &e.ln1_gain, &e.ln1_bias, &e.ln2_gain, &e.ln2_bias};
    for (int k = 0; k < 10; ++k) {
      auto it = by_name.find(p + kTensorNames[k]);
      if (it == by_name.end()) throw std::runtime_error("tensor file: missing " + p + kTensorNames[k]);
      *mats[k] = to_matrix(*it->second);
    }
    model.encoders.push_back(std::move(e));
  }
  if (model.encoders.empty()) throw std::runtime_error("tensor file: no encoder.0.* tensors");
  if (by_name.size() != model.encoders.size() * 10) throw std::runtime_error("tensor file: unexpected extra tensors");

  const EncoderWeights& first = model.encoders.front();
  model.config.n_encoders = static_cast<int>(model.encoders.size());
  model.config.embed_dim = static_cast<int>(first.w_q.rows());
  model.config.mlp_ratio = static_cast<double>(first.mlp_1.cols()) / static_cast<double>(first.w_q.rows());
  model.config.validate();
  for (const auto& e : model.encoders) e.validate(model.config);
  return model;
}

}  // namespace xbarvit
