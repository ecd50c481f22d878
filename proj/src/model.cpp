#include "pointsentinel/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ps::nn {

std::string to_string(HeadVariant v) {
  switch (v) {
    case HeadVariant::regression: return "regression";
    case HeadVariant::pixelwise: return "pixelwise";
    case HeadVariant::spatial_softmax: return "spatial_softmax";
  }
  return "?";
}

HeadVariant head_variant_from_string(const std::string& s) {
  if (s == "regression") return HeadVariant::regression;
  if (s == "pixelwise") return HeadVariant::pixelwise;
  if (s == "spatial_softmax") return HeadVariant::spatial_softmax;
  throw ValidationError(format_msg("unknown head variant '", s, "'"));
}

void validate(const BackboneConfig& cfg) {
  PS_CHECK(cfg.in_channels >= 1, "backbone: in_channels must be >= 1");
  PS_CHECK(cfg.base_channels >= 1, "backbone: base_channels must be >= 1");
  PS_CHECK(cfg.num_blocks >= 0, "backbone: num_blocks must be >= 0");
  PS_CHECK(cfg.output_stride >= 1 && (cfg.output_stride & (cfg.output_stride - 1)) == 0,
           "backbone: output_stride must be a power of two, got ", cfg.output_stride);
}

namespace {

int log2_int(int v) {
  int l = 0;
  while ((1 << l) < v) ++l;
  return l;
}

std::vector<float> he_normal(Rng& rng, const ad::Shape& shape, int fan_in) {
  std::vector<float> v(static_cast<std::size_t>(ad::numel(shape)));
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (float& x : v) x = static_cast<float>(rng.normal(0.0, std_dev));
  return v;
}

}  // namespace

DetectionModel::DetectionModel(const BackboneConfig& backbone, HeadVariant head,
                               std::uint64_t init_seed)
    : backbone_(backbone), head_(head) {
  validate(backbone_);
  Rng rng(derive_seed(init_seed, 0xB0DE));
  const int c = backbone_.base_channels;

  auto add_conv = [&](const std::string& name, int c_out, int c_in, int k) {
    ad::Shape ws{c_out, c_in, k, k};
    params_.push_back({name + ".w", ws, he_normal(rng, ws, c_in * k * k)});
    params_.push_back({name + ".b", {c_out}, std::vector<float>(static_cast<std::size_t>(c_out), 0.0f)});
  };

  stem_index_ = 0;
  if (backbone_.output_stride >= 2) {
    add_conv("stem", c, backbone_.in_channels, 4);
    num_downs_ = log2_int(backbone_.output_stride) - 1;
  } else {
    add_conv("stem", c, backbone_.in_channels, 3);
    num_downs_ = 0;
  }
  for (int d = 0; d < num_downs_; ++d) {
    add_conv(format_msg("down", d), c, c, 2);
  }
  for (int blk = 0; blk < backbone_.num_blocks; ++blk) {
    add_conv(format_msg("block", blk, ".conv1"), c, c, 3);
    add_conv(format_msg("block", blk, ".conv2"), c, c, 3);
  }
  if (head_ == HeadVariant::regression) {
    ad::Shape ws{c, 2};
    params_.push_back({"head.w", ws, he_normal(rng, ws, c)});
    params_.push_back({"head.b", {2}, {0.0f, 0.0f}});
  } else {
    add_conv("head", 1, c, 1);
  }
}

int DetectionModel::param_index(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw ValidationError(format_msg("model has no parameter '", name, "'"));
}

DetectionModel::Binding DetectionModel::bind(ad::Graph& g) const {
  Binding b;
  b.leaves.reserve(params_.size());
  for (const Param& p : params_) {
    b.leaves.push_back(g.leaf(p.shape, std::span<const float>(p.value), true));
  }
  return b;
}

ad::Tensor DetectionModel::image_leaf(ad::Graph& g, const Image& img) const {
  PS_CHECK(backbone_.in_channels == 1, "image_leaf: backbone expects ", backbone_.in_channels,
           " channels");
  return g.leaf({1, img.height, img.width}, std::span<const float>(img.pixels), false);
}

ad::Tensor DetectionModel::features(const Binding& b, const ad::Tensor& image) const {
  const ad::Shape& shp = image.shape();
  PS_CHECK(shp.size() == 3 && shp[0] == backbone_.in_channels,
           "features: image must be [", backbone_.in_channels, ",H,W], got ", ad::shape_str(shp));
  PS_CHECK(shp[1] % backbone_.output_stride == 0 && shp[2] % backbone_.output_stride == 0,
           "features: image dims ", shp[1], "x", shp[2], " not divisible by output stride ",
           backbone_.output_stride);

  int pi = 0;
  auto next = [&]() -> const ad::Tensor& { return b.leaves[static_cast<std::size_t>(pi++)]; };

  ad::Tensor h;
  if (backbone_.output_stride >= 2) {
    const ad::Tensor& w = next();
    const ad::Tensor& bias = next();
    h = ad::relu(ad::bias_add(ad::conv2d(image, w, 2, 1), bias));
  } else {
    const ad::Tensor& w = next();
    const ad::Tensor& bias = next();
    h = ad::relu(ad::bias_add(ad::conv2d(image, w, 1, 1), bias));
  }
  for (int d = 0; d < num_downs_; ++d) {
    const ad::Tensor& w = next();
    const ad::Tensor& bias = next();
    h = ad::relu(ad::bias_add(ad::conv2d(h, w, 2, 0), bias));
  }
  for (int blk = 0; blk < backbone_.num_blocks; ++blk) {
    const ad::Tensor& w1 = next();
    const ad::Tensor& b1 = next();
    const ad::Tensor& w2 = next();
    const ad::Tensor& b2 = next();
    ad::Tensor t = ad::relu(ad::bias_add(ad::conv2d(h, w1, 1, 1), b1));
    t = ad::bias_add(ad::conv2d(t, w2, 1, 1), b2);
    h = ad::relu(ad::add(h, t));
  }
  return h;
}

ad::Tensor DetectionModel::map_logits(const Binding& b, const ad::Tensor& image) const {
  PS_CHECK(head_ != HeadVariant::regression, "map_logits: model has a regression head");
  ad::Tensor feat = features(b, image);
  const ad::Tensor& w = b.leaves[params_.size() - 2];
  const ad::Tensor& bias = b.leaves[params_.size() - 1];
  ad::Tensor logits = ad::bias_add(ad::conv2d(feat, w, 1, 0), bias);
  const ad::Shape& s = logits.shape();
  return ad::reshape(logits, {s[1], s[2]});
}

ad::Tensor DetectionModel::regression_output(const Binding& b,
                                             const ad::Tensor& image) const {
  PS_CHECK(head_ == HeadVariant::regression, "regression_output: model has a map head");
  ad::Tensor feat = features(b, image);
  ad::Tensor pooled = ad::reshape(ad::global_avgpool(feat), {1, backbone_.base_channels});
  const ad::Tensor& w = b.leaves[params_.size() - 2];
  const ad::Tensor& bias = b.leaves[params_.size() - 1];
  ad::Tensor out = ad::add(ad::matmul(pooled, w), ad::reshape(bias, {1, 2}));
  return ad::reshape(ad::sigmoid(out), {2});
}

namespace {

ActivationMap materialize_map(const ad::Tensor& post, int stride, ActivationKind kind) {
  ActivationMap m;
  const ad::Shape& s = post.shape();
  m.h = s[0];
  m.w = s[1];
  m.output_stride = stride;
  m.kind = kind;
  auto vals = post.values();
  m.scores.assign(vals.begin(), vals.end());
  if (kind != ActivationKind::logit) {
    // Keep probabilities strictly inside (0,1) even when float32 saturates.
    const float hi = std::nextafter(1.0f, 0.0f);
    for (float& v : m.scores) v = std::clamp(v, 1e-7f, hi);
  }
  return m;
}

}  // namespace

HeadOutput DetectionModel::head_forward(const Binding& b, const ad::Tensor& features,
                                        int image_h, int image_w) const {
  const ad::Shape& fs = features.shape();
  PS_CHECK(fs.size() == 3 && fs[0] == backbone_.base_channels,
           "head_forward: features must be [", backbone_.base_channels, ",h,w], got ",
           ad::shape_str(fs));
  if (head_ == HeadVariant::regression) {
    ad::Tensor pooled = ad::reshape(ad::global_avgpool(features), {1, backbone_.base_channels});
    const ad::Tensor& w = b.leaves[params_.size() - 2];
    const ad::Tensor& bias = b.leaves[params_.size() - 1];
    ad::Tensor out =
        ad::reshape(ad::sigmoid(ad::add(ad::matmul(pooled, w), ad::reshape(bias, {1, 2}))), {2});
    PredictedPoint p;
    p.x = out.values()[0] * static_cast<float>(image_w);
    p.y = out.values()[1] * static_cast<float>(image_h);
    p.score = 1.0f;  // the regression head carries no confidence
    return p;
  }
  const ad::Tensor& w = b.leaves[params_.size() - 2];
  const ad::Tensor& bias = b.leaves[params_.size() - 1];
  ad::Tensor logits = ad::bias_add(ad::conv2d(features, w, 1, 0), bias);
  ad::Tensor flat = ad::reshape(logits, {logits.shape()[1], logits.shape()[2]});
  const int stride = backbone_.output_stride;
  if (head_ == HeadVariant::pixelwise) {
    return materialize_map(ad::sigmoid(flat), stride, ActivationKind::sigmoid);
  }
  return materialize_map(ad::spatial_softmax_op(flat), stride, ActivationKind::spatial_softmax);
}

ActivationMap DetectionModel::activation_map(const Image& img) const {
  PS_CHECK(head_ != HeadVariant::regression, "activation_map: model has a regression head");
  ad::Graph g;
  Binding b = bind(g);
  ad::Tensor feat = features(b, image_leaf(g, img));
  HeadOutput out = head_forward(b, feat, img.height, img.width);
  return std::get<ActivationMap>(out);
}

PredictedPoint DetectionModel::predict(const Image& img) const {
  ad::Graph g;
  Binding b = bind(g);
  ad::Tensor feat = features(b, image_leaf(g, img));
  HeadOutput out = head_forward(b, feat, img.height, img.width);
  if (std::holds_alternative<PredictedPoint>(out)) return std::get<PredictedPoint>(out);
  return decode_argmax(std::get<ActivationMap>(out), img.height, img.width);
}

PredictedPoint decode_argmax(const ActivationMap& map, int image_h, int image_w) {
  PS_CHECK(map.h > 0 && map.w > 0 && !map.scores.empty(), "decode_argmax: empty map");
  PS_CHECK(map.h * map.output_stride == image_h && map.w * map.output_stride == image_w,
           "decode_argmax: map ", map.h, "x", map.w, " at stride ", map.output_stride,
           " does not cover image ", image_h, "x", image_w);
  std::size_t arg = 0;
  float best = map.scores[0];
  for (std::size_t i = 1; i < map.scores.size(); ++i) {
    if (map.scores[i] > best) {
      best = map.scores[i];
      arg = i;
    }
  }
  const int i = static_cast<int>(arg) / map.w;
  const int j = static_cast<int>(arg) % map.w;
  PredictedPoint p;
  p.x = (static_cast<float>(j) + 0.5f) * static_cast<float>(map.output_stride);
  p.y = (static_cast<float>(i) + 0.5f) * static_cast<float>(map.output_stride);
  p.score = best;
  return p;
}

float map_confidence(const ActivationMap& map) {
  PS_CHECK(!map.scores.empty(), "map_confidence: empty map");
  return *std::max_element(map.scores.begin(), map.scores.end());
}

std::vector<float> encode_target(float x, float y, int map_h, int map_w, int stride) {
  PS_CHECK(map_h >= 1 && map_w >= 1 && stride >= 1, "encode_target: bad grid");
  const float image_w = static_cast<float>(map_w * stride);
  const float image_h = static_cast<float>(map_h * stride);
  PS_CHECK(x >= 0.0f && x < image_w && y >= 0.0f && y < image_h, "encode_target: point (", x,
           ",", y, ") outside image ", image_h, "x", image_w);
  int i = static_cast<int>(std::floor(y / static_cast<float>(stride)));
  int j = static_cast<int>(std::floor(x / static_cast<float>(stride)));
  i = std::clamp(i, 0, map_h - 1);
  j = std::clamp(j, 0, map_w - 1);
  std::vector<float> grid(static_cast<std::size_t>(map_h) * map_w, 0.0f);
  grid[static_cast<std::size_t>(i) * map_w + j] = 1.0f;
  return grid;
}

// --- checkpoint container --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'S', 'C', 'K', 'P', 'T', '1', '\n'};
constexpr int kFormatVersion = 1;

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  PS_IO_CHECK(in.gcount() == 8, "checkpoint '", path, "': truncated header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint_file(const CheckpointFile& file, const std::string& path) {
  nlohmann::json header = file.header;
  header["format_version"] = kFormatVersion;
  nlohmann::json buffers = nlohmann::json::array();
  for (const NamedBuffer& b : file.buffers) {
    PS_CHECK(ad::numel(b.shape) == static_cast<std::int64_t>(b.data.size()),
             "checkpoint buffer '", b.name, "': shape/data mismatch");
    buffers.push_back({{"name", b.name}, {"shape", b.shape}});
  }
  header["buffers"] = buffers;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  PS_IO_CHECK(out.good(), "cannot write checkpoint '", path, "'");
  out.write(kMagic, sizeof(kMagic));
  write_u64_le(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const NamedBuffer& b : file.buffers) {
    // Raw little-endian float32; this code targets little-endian hosts.
    out.write(reinterpret_cast<const char*>(b.data.data()),
              static_cast<std::streamsize>(b.data.size() * sizeof(float)));
  }
  PS_IO_CHECK(out.good(), "failed writing checkpoint '", path, "'");
}

CheckpointFile load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  PS_IO_CHECK(in.good(), "cannot open checkpoint '", path, "'");
  char magic[8];
  in.read(magic, 8);
  PS_IO_CHECK(in.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, "checkpoint '", path,
              "': bad magic");
  const std::uint64_t header_len = read_u64_le(in, path);
  PS_IO_CHECK(header_len < (64u << 20), "checkpoint '", path, "': implausible header length");
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  PS_IO_CHECK(static_cast<std::uint64_t>(in.gcount()) == header_len, "checkpoint '", path,
              "': truncated header");

  CheckpointFile file;
  try {
    file.header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(format_msg("checkpoint '", path, "': bad header json: ", e.what()));
  }
  PS_CHECK(file.header.value("format_version", -1) == kFormatVersion, "checkpoint '", path,
           "': format version mismatch (want ", kFormatVersion, ")");

  for (const auto& bj : file.header.at("buffers")) {
    NamedBuffer b;
    b.name = bj.at("name").get<std::string>();
    b.shape = bj.at("shape").get<ad::Shape>();
    const std::int64_t n = ad::numel(b.shape);
    PS_CHECK(n >= 0, "checkpoint '", path, "': bad buffer shape for '", b.name, "'");
    b.data.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(b.data.data()),
            static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    PS_IO_CHECK(static_cast<std::size_t>(in.gcount()) == b.data.size() * sizeof(float),
                "checkpoint '", path, "': truncated buffer '", b.name, "'");
    file.buffers.push_back(std::move(b));
  }
  in.peek();
  PS_IO_CHECK(in.eof(), "checkpoint '", path, "': trailing bytes after buffers");
  return file;
}

nlohmann::json backbone_to_json(const BackboneConfig& cfg) {
  return {{"in_channels", cfg.in_channels},
          {"base_channels", cfg.base_channels},
          {"num_blocks", cfg.num_blocks},
          {"output_stride", cfg.output_stride}};
}

BackboneConfig backbone_from_json(const nlohmann::json& j) {
  BackboneConfig cfg;
  cfg.in_channels = j.value("in_channels", 1);
  cfg.base_channels = j.value("base_channels", 16);
  cfg.num_blocks = j.value("num_blocks", 4);
  cfg.output_stride = j.value("output_stride", 4);
  validate(cfg);
  return cfg;
}

void append_model_buffers(const DetectionModel& model, const std::string& param_prefix,
                          std::vector<NamedBuffer>& buffers) {
  for (const Param& p : model.params()) {
    buffers.push_back({param_prefix + p.name, p.shape, p.value});
  }
}

DetectionModel model_from_header(const nlohmann::json& header,
                                 const std::vector<NamedBuffer>& buffers,
                                 const std::string& param_prefix) {
  const BackboneConfig cfg = backbone_from_json(header.at("arch"));
  const HeadVariant head = head_variant_from_string(header.at("head").get<std::string>());
  DetectionModel model(cfg, head, 0);
  std::size_t cursor = 0;
  for (Param& p : model.mutable_params()) {
    const std::string want = param_prefix + p.name;
    while (cursor < buffers.size() && buffers[cursor].name != want) ++cursor;
    PS_CHECK(cursor < buffers.size(), "checkpoint: missing parameter buffer '", want, "'");
    const NamedBuffer& b = buffers[cursor];
    PS_CHECK(b.shape == p.shape, "checkpoint: parameter '", want, "' has shape ",
             ad::shape_str(b.shape), ", model expects ", ad::shape_str(p.shape));
    p.value = b.data;
    ++cursor;
  }
  return model;
}

void save_model(const DetectionModel& model, const std::string& path) {
  CheckpointFile file;
  file.header["kind"] = "model";
  file.header["arch"] = backbone_to_json(model.backbone());
  file.header["head"] = to_string(model.variant());
  append_model_buffers(model, "", file.buffers);
  save_checkpoint_file(file, path);
}

DetectionModel load_model(const std::string& path) {
  const CheckpointFile file = load_checkpoint_file(path);
  PS_CHECK(file.header.value("kind", "") == "model", "checkpoint '", path,
           "': not a model checkpoint");
  return model_from_header(file.header, file.buffers, "");
}

}  // namespace ps::nn
