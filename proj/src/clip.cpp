/**
 * Copyright 2026 The LGNet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lgnet/clip.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace lgnet::clip {
namespace {

using nlohmann::json;
using Index = Eigen::Index;
using Bytes8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string utf8(std::uint32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }
bool is_letter(unsigned char c) { return std::isalpha(c) || c >= 0x80; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

float widen_half(std::uint16_t bits) { return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits)); }
float widen_bf16(std::uint16_t bits) { return static_cast<float>(Eigen::numext::bit_cast<Eigen::bfloat16>(bits)); }

// PIL's bicubic kernel (a = -0.5).
double bicubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

constexpr int kPrecisionBits = 32 - 8 - 2;

struct Taps {
  std::vector<int> first;
  std::vector<std::vector<std::int32_t>> weights;
};

Taps resample_taps(Index in_size, Index out_size) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  const double filterscale = std::max(scale, 1.0);
  const double support = 2.0 * filterscale;
  Taps t;
  t.first.resize(static_cast<std::size_t>(out_size));
  t.weights.resize(static_cast<std::size_t>(out_size));
  for (Index xx = 0; xx < out_size; ++xx) {
    const double center = (static_cast<double>(xx) + 0.5) * scale;
    int xmin = static_cast<int>(center - support + 0.5);
    if (xmin < 0) xmin = 0;
    int xmax = static_cast<int>(center + support + 0.5);
    if (xmax > in_size) xmax = static_cast<int>(in_size);
    xmax -= xmin;
    std::vector<double> k(static_cast<std::size_t>(xmax));
    double ww = 0;
    for (int x = 0; x < xmax; ++x) {
      k[x] = bicubic((x + xmin - center + 0.5) / filterscale);
      ww += k[x];
    }
    auto& w = t.weights[static_cast<std::size_t>(xx)];
    w.resize(k.size());
    for (std::size_t x = 0; x < k.size(); ++x) {
      const double v = ww != 0.0 ? k[x] / ww : k[x];
      w[x] = static_cast<std::int32_t>(v < 0 ? -0.5 + v * (1 << kPrecisionBits) : 0.5 + v * (1 << kPrecisionBits));
    }
    t.first[static_cast<std::size_t>(xx)] = xmin;
  }
  return t;
}

std::uint8_t clip8(std::int64_t acc) {
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(acc >> kPrecisionBits, 0, 255));
}

void check_shape(const std::string& name, const StoredTensor& t, std::vector<std::int64_t> want) {
  if (t.shape != want) {
    std::string got, exp;
    for (auto d : t.shape) got += std::to_string(d) + ",";
    for (auto d : want) exp += std::to_string(d) + ",";
    throw std::runtime_error("tensor " + name + " has shape [" + got + "], expected [" + exp + "]");
  }
}

class WeightTable {
 public:
  explicit WeightTable(std::map<std::string, StoredTensor> t) : t_(std::move(t)) {}

  const StoredTensor& get(const std::string& name) const {
    auto it = t_.find(name);
    if (it == t_.end()) throw std::runtime_error("checkpoint is missing tensor " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return t_.count(name) > 0; }

  RowMatrix matrix(const std::string& name, Index rows, Index cols) const {
    const auto& t = get(name);
    check_shape(name, t, {rows, cols});
    return Eigen::Map<const RowMatrix>(t.values.data(), rows, cols);
  }
  Eigen::RowVectorXf vector(const std::string& name, Index n) const {
    const auto& t = get(name);
    check_shape(name, t, {n});
    return Eigen::Map<const Eigen::RowVectorXf>(t.values.data(), n);
  }

 private:
  std::map<std::string, StoredTensor> t_;
};

EncoderConfig encoder_config(const json& j, Index hidden, Index inter, int layers, int heads) {
  EncoderConfig c;
  c.hidden = j.value("hidden_size", hidden);
  c.intermediate = j.value("intermediate_size", inter);
  c.layers = j.value("num_hidden_layers", layers);
  c.heads = j.value("num_attention_heads", heads);
  c.layer_norm_eps = j.value("layer_norm_eps", 1e-5);
  const std::string act = j.value("hidden_act", std::string("quick_gelu"));
  if (act != "quick_gelu" && act != "gelu") throw std::runtime_error("unsupported activation " + act);
  c.quick_gelu = act == "quick_gelu";
  if (c.hidden % c.heads != 0) throw std::runtime_error("hidden size not divisible by head count");
  return c;
}

}  // namespace

std::int64_t StoredTensor::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::map<std::string, StoredTensor> read_safetensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto file_size = static_cast<std::uint64_t>(std::filesystem::file_size(path));
  unsigned char len_bytes[8];
  if (!in.read(reinterpret_cast<char*>(len_bytes), 8)) throw std::runtime_error(path.string() + ": truncated header");
  std::uint64_t header_len = 0;
  for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
  if (header_len > file_size - 8) throw std::runtime_error(path.string() + ": header length out of range");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": bad header: " + e.what());
  }
  const std::uint64_t base = 8 + header_len;

  std::map<std::string, StoredTensor> out;
  std::vector<char> raw;
  for (const auto& [name, meta] : h.items()) {
    if (name == "__metadata__") continue;
    const std::string dtype = meta.at("dtype");
    const std::size_t width = dtype == "F32" ? 4 : (dtype == "F16" || dtype == "BF16") ? 2 : 0;
    if (width == 0) throw std::runtime_error(path.string() + ": tensor " + name + " has unsupported dtype " + dtype);
    StoredTensor t;
    t.shape = meta.at("shape").get<std::vector<std::int64_t>>();
    const auto begin = meta.at("data_offsets")[0].get<std::uint64_t>();
    const auto end = meta.at("data_offsets")[1].get<std::uint64_t>();
    const auto n = static_cast<std::uint64_t>(t.numel());
    if (end < begin || end - begin != n * width || base + end > file_size)
      throw std::runtime_error(path.string() + ": tensor " + name + " has inconsistent offsets");
    raw.resize(end - begin);
    in.seekg(static_cast<std::streamoff>(base + begin));
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error(path.string() + ": short read for " + name);
    t.values.resize(n);
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    for (std::uint64_t i = 0; i < n; ++i) {
      if (width == 4) {
        std::uint32_t bits = p[4 * i] | (p[4 * i + 1] << 8) | (p[4 * i + 2] << 16) | (std::uint32_t(p[4 * i + 3]) << 24);
        t.values[i] = Eigen::numext::bit_cast<float>(bits);
      } else {
        const auto bits = static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8));
        t.values[i] = dtype == "F16" ? widen_half(bits) : widen_bf16(bits);
      }
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tokenizer

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) {
  Tokenizer tok;
  const json vocab = read_json(vocab_json);
  for (const auto& [k, v] : vocab.items()) tok.vocab_[k] = v.get<int>();
  std::ifstream in(merges_txt);
  if (!in) throw std::runtime_error("cannot open " + merges_txt.string());
  std::string line;
  int rank = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("#version", 0) == 0) continue;
    tok.ranks_.emplace(line, rank++);
  }
  // GPT-2 byte to printable code point table.
  std::vector<int> bs;
  for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
  for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
  for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
  std::vector<bool> direct(256, false);
  for (int b : bs) direct[b] = true;
  int extra = 0;
  for (int b = 0; b < 256; ++b) tok.byte_char_[b] = utf8(direct[b] ? b : 256 + extra++);

  auto special = [&](const std::string& s) {
    auto it = tok.vocab_.find(s);
    if (it == tok.vocab_.end()) throw std::runtime_error(vocab_json.string() + ": missing " + s);
    return it->second;
  };
  tok.bos_ = special("<|startoftext|>");
  tok.eos_ = special("<|endoftext|>");
  return tok;
}

std::vector<std::string> Tokenizer::pretokenize(std::string_view text) const {
  std::string norm;
  bool in_space = false;
  for (unsigned char c : text) {
    if (is_space(c)) {
      if (!in_space) norm += ' ';
      in_space = true;
      continue;
    }
    in_space = false;
    norm += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
  }

  std::vector<std::string> words;
  std::size_t i = 0;
  const auto n = norm.size();
  auto at = [&](std::size_t k) { return k < n ? static_cast<unsigned char>(norm[k]) : 0; };
  while (i < n) {
    const unsigned char c = at(i);
    std::size_t j = i + 1;
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (c == '\'') {
      const unsigned char a = at(i + 1), b = at(i + 2);
      if (a == 's' || a == 't' || a == 'm' || a == 'd') {
        j = i + 2;
      } else if ((a == 'r' && b == 'e') || (a == 'v' && b == 'e') || (a == 'l' && b == 'l')) {
        j = i + 3;
      } else {
        while (j < n && !is_space(at(j)) && !is_letter(at(j)) && !is_digit(at(j))) ++j;
      }
    } else if (is_letter(c)) {
      while (j < n && is_letter(at(j))) ++j;
    } else if (!is_digit(c)) {
      while (j < n && !is_space(at(j)) && !is_letter(at(j)) && !is_digit(at(j))) ++j;
    }
    words.emplace_back(norm.substr(i, j - i));
    i = j;
  }
  return words;
}

std::vector<int> Tokenizer::bpe(const std::string& word) const {
  std::vector<std::string> sym;
  for (unsigned char c : word) sym.push_back(byte_char_[c]);
  if (sym.empty()) return {};
  sym.back() += "</w>";
  while (sym.size() > 1) {
    int best = std::numeric_limits<int>::max();
    std::size_t at = 0;
    for (std::size_t k = 0; k + 1 < sym.size(); ++k) {
      auto it = ranks_.find(sym[k] + " " + sym[k + 1]);
      if (it != ranks_.end() && it->second < best) {
        best = it->second;
        at = k;
      }
    }
    if (best == std::numeric_limits<int>::max()) break;
    const std::string a = sym[at], b = sym[at + 1];
    std::vector<std::string> next;
    for (std::size_t k = 0; k < sym.size(); ++k) {
      if (k + 1 < sym.size() && sym[k] == a && sym[k + 1] == b) {
        next.push_back(a + b);
        ++k;
      } else {
        next.push_back(sym[k]);
      }
    }
    sym = std::move(next);
  }
  std::vector<int> ids;
  for (const auto& s : sym) {
    auto it = vocab_.find(s);
    ids.push_back(it == vocab_.end() ? eos_ : it->second);
  }
  return ids;
}

std::vector<int> Tokenizer::encode(std::string_view text, std::size_t max_length) const {
  if (max_length < 2) throw std::invalid_argument("max_length must leave room for bos and eos");
  std::vector<int> ids{bos_};
  for (const auto& w : pretokenize(text)) {
    for (int id : bpe(w)) ids.push_back(id);
  }
  if (ids.size() > max_length - 1) ids.resize(max_length - 1);
  ids.push_back(eos_);
  return ids;
}

// ---------------------------------------------------------------------------
// Preprocessing

Bytes8 resize_bicubic(const Bytes8& src, Index out_h, Index out_w) {
  if (src.size() == 0 || out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bicubic: empty image");
  const Taps th = resample_taps(src.cols(), out_w);
  Bytes8 tmp(src.rows(), out_w);
  for (Index r = 0; r < src.rows(); ++r) {
    for (Index x = 0; x < out_w; ++x) {
      const auto& w = th.weights[static_cast<std::size_t>(x)];
      const int x0 = th.first[static_cast<std::size_t>(x)];
      std::int64_t acc = 1 << (kPrecisionBits - 1);
      for (std::size_t k = 0; k < w.size(); ++k) acc += static_cast<std::int64_t>(src(r, x0 + Index(k))) * w[k];
      tmp(r, x) = clip8(acc);
    }
  }
  const Taps tv = resample_taps(src.rows(), out_h);
  Bytes8 out(out_h, out_w);
  for (Index y = 0; y < out_h; ++y) {
    const auto& w = tv.weights[static_cast<std::size_t>(y)];
    const int y0 = tv.first[static_cast<std::size_t>(y)];
    for (Index c = 0; c < out_w; ++c) {
      std::int64_t acc = 1 << (kPrecisionBits - 1);
      for (std::size_t k = 0; k < w.size(); ++k) acc += static_cast<std::int64_t>(tmp(y0 + Index(k), c)) * w[k];
      out(y, c) = clip8(acc);
    }
  }
  return out;
}

RowMatrix preprocess(const IRImage& image, int size) {
  const Index h = image.height(), w = image.width();
  if (h == 0 || w == 0) throw std::invalid_argument("preprocess: image " + image.id + " is empty");
  if (!image.pixels.allFinite()) throw std::invalid_argument("preprocess: image " + image.id + " has non-finite pixels");
  const Bytes8 gray = image.pixels.unaryExpr([](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  const Index shorter = std::min(h, w), longer = std::max(h, w);
  const auto scaled = static_cast<Index>(static_cast<double>(size) * static_cast<double>(longer) / static_cast<double>(shorter));
  const Index rh = w <= h ? scaled : size, rw = w <= h ? size : scaled;
  const Bytes8 resized = resize_bicubic(gray, rh, rw);
  const Index top = (rh - size) / 2, left = (rw - size) / 2;

  static constexpr float mean[3] = {0.48145466f, 0.4578275f, 0.40821073f};
  static constexpr float stdev[3] = {0.26862954f, 0.26130258f, 0.27577711f};
  RowMatrix out(3, Index(size) * size);
  for (Index r = 0; r < size; ++r) {
    for (Index c = 0; c < size; ++c) {
      const float v = static_cast<float>(resized(top + r, left + c)) * (1.0f / 255.0f);
      for (int ch = 0; ch < 3; ++ch) out(ch, r * size + c) = (v - mean[ch]) / stdev[ch];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

ModelConfig ModelConfig::from_json_file(const std::filesystem::path& path) {
  const json j = read_json(path);
  static const json empty = json::object();
  const json& t = j.contains("text_config") ? j["text_config"] : empty;
  const json& v = j.contains("vision_config") ? j["vision_config"] : empty;
  ModelConfig c;
  c.text = encoder_config(t, 512, 2048, 12, 8);
  c.vision = encoder_config(v, 768, 3072, 12, 12);
  c.projection_dim = j.value("projection_dim", Index{512});
  c.max_positions = t.value("max_position_embeddings", Index{77});
  c.eos_token_id = t.value("eos_token_id", 2);
  c.image_size = v.value("image_size", 224);
  c.patch_size = v.value("patch_size", 32);
  if (c.image_size % c.patch_size != 0) throw std::runtime_error(path.string() + ": image size not a multiple of patch size");
  return c;
}

Model Model::load(const std::filesystem::path& dir) {
  Model m;
  m.config_ = ModelConfig::from_json_file(dir / "config.json");
  const WeightTable w(read_safetensors(dir / "model.safetensors"));
  const auto& cfg = m.config_;

  auto linear = [&](const std::string& name, Index out, Index in, bool bias) {
    Linear l;
    l.weight = w.matrix(name + ".weight", out, in);
    l.has_bias = bias;
    if (bias) l.bias = w.vector(name + ".bias", out);
    return l;
  };
  auto norm = [&](const std::string& name, Index n) { return Norm{w.vector(name + ".weight", n), w.vector(name + ".bias", n)}; };
  auto encoder = [&](const std::string& prefix, const EncoderConfig& ec) {
    Encoder e;
    e.cfg = ec;
    for (int i = 0; i < ec.layers; ++i) {
      const std::string p = prefix + ".encoder.layers." + std::to_string(i);
      Layer l;
      l.ln1 = norm(p + ".layer_norm1", ec.hidden);
      l.ln2 = norm(p + ".layer_norm2", ec.hidden);
      l.q = linear(p + ".self_attn.q_proj", ec.hidden, ec.hidden, true);
      l.k = linear(p + ".self_attn.k_proj", ec.hidden, ec.hidden, true);
      l.v = linear(p + ".self_attn.v_proj", ec.hidden, ec.hidden, true);
      l.out = linear(p + ".self_attn.out_proj", ec.hidden, ec.hidden, true);
      l.fc1 = linear(p + ".mlp.fc1", ec.intermediate, ec.hidden, true);
      l.fc2 = linear(p + ".mlp.fc2", ec.hidden, ec.intermediate, true);
      e.layers.push_back(std::move(l));
    }
    return e;
  };

  const Index th = cfg.text.hidden, vh = cfg.vision.hidden;
  const auto& tok = w.get("text_model.embeddings.token_embedding.weight");
  if (tok.shape.size() != 2 || tok.shape[1] != th) throw std::runtime_error("token embedding has the wrong width");
  m.token_embedding_ = w.matrix("text_model.embeddings.token_embedding.weight", tok.shape[0], th);
  m.text_positions_ = w.matrix("text_model.embeddings.position_embedding.weight", cfg.max_positions, th);
  m.text_ = encoder("text_model", cfg.text);
  m.text_final_norm_ = norm("text_model.final_layer_norm", th);
  m.text_projection_ = linear("text_projection", cfg.projection_dim, th, false);

  const Index p = cfg.patch_size, grid = cfg.image_size / p;
  const auto& patch = w.get("vision_model.embeddings.patch_embedding.weight");
  check_shape("vision_model.embeddings.patch_embedding.weight", patch, {vh, 3, p, p});
  m.patch_weight_ = Eigen::Map<const RowMatrix>(patch.values.data(), vh, 3 * p * p);
  m.class_embedding_ = w.vector("vision_model.embeddings.class_embedding", vh);
  m.vision_positions_ = w.matrix("vision_model.embeddings.position_embedding.weight", grid * grid + 1, vh);
  m.pre_norm_ = norm("vision_model.pre_layrnorm", vh);
  m.vision_ = encoder("vision_model", cfg.vision);
  m.post_norm_ = norm("vision_model.post_layernorm", vh);
  m.visual_projection_ = linear("visual_projection", cfg.projection_dim, vh, false);
  return m;
}

RowMatrix Model::apply(const Linear& l, const RowMatrix& x) {
  RowMatrix y = x * l.weight.transpose();
  if (l.has_bias) y.rowwise() += l.bias;
  return y;
}

RowMatrix Model::layer_norm(const Norm& n, const RowMatrix& x, double eps) {
  RowMatrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const float mean = x.row(r).mean();
    const Eigen::RowVectorXf d = x.row(r).array() - mean;
    const float var = d.squaredNorm() / static_cast<float>(x.cols());
    y.row(r) = (d / std::sqrt(var + static_cast<float>(eps))).cwiseProduct(n.weight) + n.bias;
  }
  return y;
}

RowMatrix Model::run(const Encoder& enc, RowMatrix x, bool causal) {
  const Index t = x.rows(), heads = enc.cfg.heads, hd = enc.cfg.hidden / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  for (const auto& l : enc.layers) {
    const RowMatrix h = layer_norm(l.ln1, x, enc.cfg.layer_norm_eps);
    const RowMatrix q = apply(l.q, h) * scale, k = apply(l.k, h), v = apply(l.v, h);
    RowMatrix ctx(t, enc.cfg.hidden);
    for (Index hh = 0; hh < heads; ++hh) {
      RowMatrix s = q.middleCols(hh * hd, hd) * k.middleCols(hh * hd, hd).transpose();
      for (Index i = 0; i < t; ++i) {
        const Index valid = causal ? i + 1 : t;
        const float mx = s.row(i).head(valid).maxCoeff();
        s.row(i).head(valid) = (s.row(i).head(valid).array() - mx).exp();
        s.row(i).head(valid) /= s.row(i).head(valid).sum();
        s.row(i).tail(t - valid).setZero();
      }
      ctx.middleCols(hh * hd, hd) = s * v.middleCols(hh * hd, hd);
    }
    x += apply(l.out, ctx);
    RowMatrix f = apply(l.fc1, layer_norm(l.ln2, x, enc.cfg.layer_norm_eps));
    if (enc.cfg.quick_gelu) {
      f = f.array() / (1.0f + (-1.702f * f.array()).exp());
    } else {
      f = f.unaryExpr([](float z) { return 0.5f * z * (1.0f + std::erf(z / std::sqrt(2.0f))); });
    }
    x += apply(l.fc2, f);
  }
  return x;
}

Eigen::VectorXf Model::text_features(const std::vector<int>& ids) const {
  const auto t = static_cast<Index>(ids.size());
  if (t == 0 || t > config_.max_positions) throw std::invalid_argument("text length out of range");
  RowMatrix x(t, config_.text.hidden);
  for (Index i = 0; i < t; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= token_embedding_.rows()) throw std::invalid_argument("token id out of range");
    x.row(i) = token_embedding_.row(id) + text_positions_.row(i);
  }
  x = layer_norm(text_final_norm_, run(text_, std::move(x), true), config_.text.layer_norm_eps);
  // Legacy configs (eos id 2) pool at the highest id, which is eos in the CLIP vocabulary.
  Index pool = 0;
  if (config_.eos_token_id == 2) {
    pool = std::max_element(ids.begin(), ids.end()) - ids.begin();
  } else {
    auto it = std::find(ids.begin(), ids.end(), config_.eos_token_id);
    if (it != ids.end()) pool = it - ids.begin();
  }
  return apply(text_projection_, x.row(pool)).transpose();
}

Eigen::VectorXf Model::image_features(const RowMatrix& pixel_values) const {
  const Index s = config_.image_size, p = config_.patch_size, g = s / p;
  if (pixel_values.rows() != 3 || pixel_values.cols() != s * s) throw std::invalid_argument("pixel_values has the wrong shape");
  RowMatrix patches(g * g, 3 * p * p);
  for (Index gy = 0; gy < g; ++gy)
    for (Index gx = 0; gx < g; ++gx)
      for (Index c = 0; c < 3; ++c)
        for (Index ky = 0; ky < p; ++ky)
          for (Index kx = 0; kx < p; ++kx)
            patches(gy * g + gx, (c * p + ky) * p + kx) = pixel_values(c, (gy * p + ky) * s + gx * p + kx);
  RowMatrix x(g * g + 1, config_.vision.hidden);
  x.row(0) = class_embedding_;
  x.bottomRows(g * g) = patches * patch_weight_.transpose();
  x += vision_positions_;
  x = run(vision_, layer_norm(pre_norm_, x, config_.vision.layer_norm_eps), false);
  const RowMatrix pooled = layer_norm(post_norm_, x.topRows(1), config_.vision.layer_norm_eps);
  return apply(visual_projection_, pooled).transpose();
}

}  // namespace lgnet::clip
