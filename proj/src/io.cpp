#include "discap/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "discap/errors.hpp"

namespace discap {

namespace {

using nlohmann::json;

json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());  // rejects trailing data
  } catch (const json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

void dump_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

// Little-endian primitives, written bytewise so layout never depends on host
// endianness.
class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path);
  }
  void u16(uint16_t v) { byte(v & 0xff); byte((v >> 8) & 0xff); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) byte((v >> (8 * i)) & 0xff);
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    u32(static_cast<uint32_t>(bits & 0xffffffffULL));
    u32(static_cast<uint32_t>(bits >> 32));
  }
  void bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void close() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  void byte(uint32_t b) { out_.put(static_cast<char>(static_cast<unsigned char>(b))); }
  std::string path_;
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path);
  }
  uint16_t u16() { return static_cast<uint16_t>(byte() | (byte() << 8)); }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    uint64_t lo = u32();
    uint64_t hi = u32();
    return std::bit_cast<double>(lo | (hi << 32));
  }
  std::string bytes(size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) fail("truncated record");
    offset_ += n;
    return s;
  }
  size_t offset() const { return offset_; }
  void expect_eof() {
    if (in_.peek() != std::char_traits<char>::eof()) fail("trailing data");
  }
  [[noreturn]] void fail(const std::string& what) {
    throw IoError(path_ + ": " + what + " at byte offset " + std::to_string(offset_));
  }

 private:
  uint32_t byte() {
    int c = in_.get();
    if (c == std::char_traits<char>::eof()) fail("truncated record");
    ++offset_;
    return static_cast<uint32_t>(c);
  }
  std::string path_;
  std::ifstream in_;
  size_t offset_ = 0;
};

void check_header(BinReader& reader, const char* magic) {
  std::string found = reader.bytes(4);
  if (found != magic) reader.fail(std::string("bad magic, expected ") + magic);
  uint32_t version = reader.u32();
  if (version != 1) reader.fail("unsupported version " + std::to_string(version));
}

std::string owner_from_id(const std::string& id) {
  size_t pos = id.rfind('#');
  if (pos == std::string::npos || pos == 0) {
    throw ValidationError("caption embedding id '" + id + "' is not of the form <image>#<suffix>");
  }
  return id.substr(0, pos);
}

}  // namespace

// ---- captions ---------------------------------------------------------------

CaptionDataset read_captions(const std::string& path) {
  json j = parse_file(path);
  if (!j.is_object() || !j.contains("images") || !j["images"].is_array()) {
    throw ValidationError(path + ": expected an object with an \"images\" array");
  }
  CaptionDataset dataset;
  for (const json& image : j["images"]) {
    if (!image.contains("id") || !image["id"].is_string()) {
      throw ValidationError(path + ": image entry without string \"id\"");
    }
    std::string id = image["id"].get<std::string>();
    if (!image.contains("captions") || !image["captions"].is_array()) {
      throw ValidationError(path + ": image '" + id + "' has no \"captions\" array");
    }
    std::vector<std::string> captions;
    for (const json& caption : image["captions"]) {
      if (!caption.is_string()) throw ValidationError(path + ": image '" + id + "' has a non-string caption");
      captions.push_back(caption.get<std::string>());
    }
    try {
      dataset.add(id, std::move(captions));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ": " + e.what());
    }
  }
  return dataset;
}

void write_captions(const CaptionDataset& dataset, const std::string& path) {
  json images = json::array();
  for (const ImageEntry& entry : dataset.images()) {
    images.push_back({{"id", entry.id}, {"captions", entry.captions}});
  }
  dump_file(json{{"images", images}}, path);
}

std::map<std::string, TokenSeq> read_candidates(const std::string& path) {
  CaptionDataset dataset = read_captions(path);
  std::map<std::string, TokenSeq> candidates;
  for (const ImageEntry& entry : dataset.images()) {
    if (entry.captions.size() != 1) {
      throw ValidationError(path + ": candidate image '" + entry.id + "' must have exactly one caption, has " +
                            std::to_string(entry.captions.size()));
    }
    candidates[entry.id] = entry.tokenized[0];
  }
  return candidates;
}

// ---- embeddings ---------------------------------------------------------------

EmbeddingStore read_embeddings(const std::string& path, StoreKind kind) {
  BinReader reader(path);
  check_header(reader, "DDEM");
  uint32_t count = reader.u32();
  uint32_t dim = reader.u32();
  EmbeddingStore store(kind);
  for (uint32_t r = 0; r < count; ++r) {
    uint16_t id_len = reader.u16();
    std::string id = reader.bytes(id_len);
    std::vector<float> vec(dim);
    for (uint32_t i = 0; i < dim; ++i) {
      vec[i] = reader.f32();
      if (!std::isfinite(vec[i])) reader.fail("non-finite float in record '" + id + "'");
    }
    store.add(id, std::move(vec), kind == StoreKind::kCaption ? owner_from_id(id) : "");
  }
  reader.expect_eof();
  return store;
}

void write_embeddings(const EmbeddingStore& store, const std::string& path) {
  BinWriter writer(path);
  writer.bytes("DDEM");
  writer.u32(1);
  writer.u32(static_cast<uint32_t>(store.size()));
  writer.u32(static_cast<uint32_t>(store.dim() < 0 ? 0 : store.dim()));
  for (const auto& [id, vec] : store.entries()) {
    if (id.size() > 0xffff) throw ValidationError("embedding id too long: " + id);
    writer.u16(static_cast<uint16_t>(id.size()));
    writer.bytes(id);
    for (float x : vec) writer.f32(x);
  }
  writer.close();
}

// ---- region features -----------------------------------------------------------

RegionFeatureSet read_region_features(const std::string& path) {
  BinReader reader(path);
  check_header(reader, "DDRF");
  uint32_t count = reader.u32();
  uint32_t dim = reader.u32();
  RegionFeatureSet set;
  set.dim = static_cast<int>(dim);
  for (uint32_t r = 0; r < count; ++r) {
    uint16_t id_len = reader.u16();
    std::string id = reader.bytes(id_len);
    if (set.features.count(id)) throw ValidationError(path + ": duplicate image id '" + id + "'");
    uint32_t rows = reader.u32();
    if (rows == 0) reader.fail("image '" + id + "' has zero regions");
    Mat features(static_cast<int>(rows), static_cast<int>(dim));
    for (size_t i = 0; i < features.data.size(); ++i) {
      float x = reader.f32();
      if (!std::isfinite(x)) reader.fail("non-finite float in record '" + id + "'");
      features.data[i] = static_cast<double>(x);
    }
    set.features.emplace(std::move(id), std::move(features));
  }
  reader.expect_eof();
  return set;
}

void write_region_features(const RegionFeatureSet& set, const std::string& path) {
  BinWriter writer(path);
  writer.bytes("DDRF");
  writer.u32(1);
  writer.u32(static_cast<uint32_t>(set.features.size()));
  writer.u32(static_cast<uint32_t>(set.dim));
  for (const auto& [id, features] : set.features) {
    if (features.cols != set.dim) {
      throw ValidationError("image '" + id + "' has width " + std::to_string(features.cols) +
                            ", file dim is " + std::to_string(set.dim));
    }
    if (id.size() > 0xffff) throw ValidationError("image id too long: " + id);
    writer.u16(static_cast<uint16_t>(id.size()));
    writer.bytes(id);
    writer.u32(static_cast<uint32_t>(features.rows));
    for (double x : features.data) writer.f32(static_cast<float>(x));
  }
  writer.close();
}

// ---- checkpoints ----------------------------------------------------------------

void write_matrices(const std::map<std::string, Mat>& matrices, const std::string& path) {
  BinWriter writer(path);
  writer.bytes("DDCP");
  writer.u32(1);
  writer.u32(static_cast<uint32_t>(matrices.size()));
  for (const auto& [name, mat] : matrices) {
    if (name.size() > 0xffff) throw ValidationError("matrix name too long: " + name);
    writer.u16(static_cast<uint16_t>(name.size()));
    writer.bytes(name);
    writer.u32(static_cast<uint32_t>(mat.rows));
    writer.u32(static_cast<uint32_t>(mat.cols));
    for (double x : mat.data) writer.f64(x);
  }
  writer.close();
}

std::map<std::string, Mat> read_matrices(const std::string& path) {
  BinReader reader(path);
  check_header(reader, "DDCP");
  uint32_t count = reader.u32();
  std::map<std::string, Mat> matrices;
  for (uint32_t r = 0; r < count; ++r) {
    uint16_t name_len = reader.u16();
    std::string name = reader.bytes(name_len);
    uint32_t rows = reader.u32();
    uint32_t cols = reader.u32();
    Mat mat(static_cast<int>(rows), static_cast<int>(cols));
    for (double& x : mat.data) x = reader.f64();
    matrices.emplace(std::move(name), std::move(mat));
  }
  reader.expect_eof();
  return matrices;
}

namespace {

Mat vec_to_mat(const std::vector<double>& v) {
  Mat m(1, static_cast<int>(v.size()));
  m.data = v;
  return m;
}

std::vector<double> mat_to_vec(const Mat& m) { return m.data; }

const Mat& named(const std::map<std::string, Mat>& matrices, const std::string& name) {
  auto it = matrices.find(name);
  if (it == matrices.end()) throw ValidationError("checkpoint is missing matrix '" + name + "'");
  return it->second;
}

}  // namespace

std::map<std::string, Mat> state_to_matrices(const TrainState& state) {
  std::map<std::string, Mat> out;
  out["meta"] = vec_to_mat({static_cast<double>(state.encoder.heads),
                            static_cast<double>(state.encoder.layers.size()),
                            static_cast<double>(state.encoder.width),
                            static_cast<double>(state.encoder.ffn_width),
                            static_cast<double>(state.decoder.vocab_size()),
                            static_cast<double>(state.step),
                            static_cast<double>(state.seed)});
  out["gdma"] = vec_to_mat({state.omega, state.bias});
  for (size_t l = 0; l < state.encoder.layers.size(); ++l) {
    const EncoderLayerParams& layer = state.encoder.layers[l];
    std::string prefix = "enc" + std::to_string(l) + ".";
    out[prefix + "wq"] = layer.w_q;
    out[prefix + "wk"] = layer.w_k;
    out[prefix + "wv"] = layer.w_v;
    out[prefix + "wo"] = layer.w_o;
    out[prefix + "mlp_w1"] = layer.mlp_w1;
    out[prefix + "mlp_b1"] = vec_to_mat(layer.mlp_b1);
    out[prefix + "mlp_w2"] = layer.mlp_w2;
    out[prefix + "mlp_b2"] = vec_to_mat(layer.mlp_b2);
    out[prefix + "ln1_gain"] = vec_to_mat(layer.ln1_gain);
    out[prefix + "ln1_bias"] = vec_to_mat(layer.ln1_bias);
    out[prefix + "ln2_gain"] = vec_to_mat(layer.ln2_gain);
    out[prefix + "ln2_bias"] = vec_to_mat(layer.ln2_bias);
  }
  out["dec.embed"] = state.decoder.embed;
  out["dec.w_out"] = state.decoder.w_out;
  out["dec.b_out"] = vec_to_mat(state.decoder.b_out);
  out["cls.w"] = state.classifier.w;
  out["cls.b"] = vec_to_mat(state.classifier.b);
  return out;
}

TrainState state_from_matrices(const std::map<std::string, Mat>& matrices) {
  TrainState state;
  std::vector<double> meta = mat_to_vec(named(matrices, "meta"));
  if (meta.size() != 7) throw ValidationError("checkpoint meta must have 7 entries");
  state.encoder.heads = static_cast<int>(meta[0]);
  int layer_count = static_cast<int>(meta[1]);
  state.encoder.width = static_cast<int>(meta[2]);
  state.encoder.ffn_width = static_cast<int>(meta[3]);
  state.step = static_cast<int>(meta[5]);
  state.seed = static_cast<uint64_t>(meta[6]);
  std::vector<double> gdma = mat_to_vec(named(matrices, "gdma"));
  if (gdma.size() != 2) throw ValidationError("checkpoint gdma must have 2 entries");
  state.omega = gdma[0];
  state.bias = gdma[1];
  state.encoder.layers.resize(static_cast<size_t>(layer_count));
  for (int l = 0; l < layer_count; ++l) {
    EncoderLayerParams& layer = state.encoder.layers[static_cast<size_t>(l)];
    std::string prefix = "enc" + std::to_string(l) + ".";
    layer.w_q = named(matrices, prefix + "wq");
    layer.w_k = named(matrices, prefix + "wk");
    layer.w_v = named(matrices, prefix + "wv");
    layer.w_o = named(matrices, prefix + "wo");
    layer.mlp_w1 = named(matrices, prefix + "mlp_w1");
    layer.mlp_b1 = mat_to_vec(named(matrices, prefix + "mlp_b1"));
    layer.mlp_w2 = named(matrices, prefix + "mlp_w2");
    layer.mlp_b2 = mat_to_vec(named(matrices, prefix + "mlp_b2"));
    layer.ln1_gain = mat_to_vec(named(matrices, prefix + "ln1_gain"));
    layer.ln1_bias = mat_to_vec(named(matrices, prefix + "ln1_bias"));
    layer.ln2_gain = mat_to_vec(named(matrices, prefix + "ln2_gain"));
    layer.ln2_bias = mat_to_vec(named(matrices, prefix + "ln2_bias"));
  }
  state.decoder.embed = named(matrices, "dec.embed");
  state.decoder.w_out = named(matrices, "dec.w_out");
  state.decoder.b_out = mat_to_vec(named(matrices, "dec.b_out"));
  state.classifier.w = named(matrices, "cls.w");
  state.classifier.b = mat_to_vec(named(matrices, "cls.b"));
  return state;
}

// ---- groups -----------------------------------------------------------------------

GroupsFile read_groups(const std::string& path) {
  json j = parse_file(path);
  GroupsFile file;
  if (!j.is_object() || !j.contains("groups") || !j["groups"].is_array()) {
    throw ValidationError(path + ": expected an object with a \"groups\" array");
  }
  file.k = j.value("K", 0);
  file.mode = j.value("mode", std::string("image-image"));
  file.seed = j.value("seed", 0ULL);
  for (const json& g : j["groups"]) {
    ImageGroup group;
    group.target = g.at("target").get<std::string>();
    for (const json& s : g.at("similars")) group.similars.push_back(s.get<std::string>());
    group.leftover = g.value("leftover", false);
    std::set<std::string> seen;
    for (const std::string& s : group.similars) {
      if (s == group.target) throw ValidationError(path + ": group target '" + group.target + "' repeats in similars");
      if (!seen.insert(s).second) throw ValidationError(path + ": duplicate similar '" + s + "' in group '" + group.target + "'");
    }
    file.groups.push_back(std::move(group));
  }
  return file;
}

void write_groups(const GroupsFile& file, const std::string& path) {
  json groups = json::array();
  for (const ImageGroup& group : file.groups) {
    groups.push_back({{"target", group.target},
                      {"similars", group.similars},
                      {"leftover", group.leftover}});
  }
  dump_file(json{{"K", file.k}, {"mode", file.mode}, {"seed", file.seed}, {"groups", groups}}, path);
}

// ---- profiles ----------------------------------------------------------------------

std::vector<DistinctProfile> read_profiles(const std::string& path) {
  json j = parse_file(path);
  if (!j.is_object() || !j.contains("profiles") || !j["profiles"].is_array()) {
    throw ValidationError(path + ": expected an object with a \"profiles\" array");
  }
  std::vector<DistinctProfile> profiles;
  for (const json& p : j["profiles"]) {
    DistinctProfile profile;
    profile.target = p.at("target").get<std::string>();
    for (const json& w : p.at("omega")) profile.omega.insert(w.get<std::string>());
    if (p.contains("weights")) {
      for (const auto& [word, weight] : p.at("weights").items()) {
        profile.weights[word] = weight.get<double>();
      }
    }
    profiles.push_back(std::move(profile));
  }
  return profiles;
}

void write_profiles(const std::vector<DistinctProfile>& profiles, const std::string& path) {
  json array = json::array();
  for (const DistinctProfile& profile : profiles) {
    json weights = json::object();
    for (const auto& [word, weight] : profile.weights) weights[word] = weight;
    array.push_back({{"target", profile.target},
                     {"omega", std::vector<std::string>(profile.omega.begin(), profile.omega.end())},
                     {"weights", weights}});
  }
  dump_file(json{{"profiles", array}}, path);
}

// ---- reports, configs, logs ----------------------------------------------------------

void write_report(const MetricReport& report, const std::string& path) {
  // BLEU is computed in [0, 1] and reported as a percentage.
  auto percent = [](const std::array<double, 4>& bleu) {
    std::array<double, 4> out{};
    for (size_t n = 0; n < 4; ++n) out[n] = bleu[n] * 100.0;
    return out;
  };
  json per_image = json::array();
  for (const ImageMetrics& row : report.per_image) {
    json entry{{"image_id", row.image_id},
               {"cider", row.cider},
               {"cider_btw", row.cider_btw},
               {"cider_rank", row.cider_rank},
               {"bleu", percent(row.bleu)}};
    if (row.dis_word_rate) entry["dis_word_rate"] = *row.dis_word_rate;
    per_image.push_back(std::move(entry));
  }
  json means{{"cider", report.mean_cider},
             {"cider_btw", report.mean_cider_btw},
             {"cider_rank", report.mean_cider_rank},
             {"bleu", percent(report.mean_bleu)}};
  if (report.mean_dis_word_rate) means["dis_word_rate"] = *report.mean_dis_word_rate;
  dump_file(json{{"per_image", per_image},
                 {"means", means},
                 {"corpus_bleu", percent(report.corpus_bleu)},
                 {"dis_word_rate_excluded", report.dis_word_rate_excluded},
                 {"image_count", report.per_image.size()}},
            path);
}

ToyConfig read_toy_config(const std::string& path) {
  json j = parse_file(path);
  if (!j.is_object()) throw ValidationError(path + ": config must be a flat JSON object");
  ToyConfig config;
  for (const auto& [key, value] : j.items()) {
    if (key == "K") config.k_similar = value.get<int>();
    else if (key == "seed") config.seed = value.get<uint64_t>();
    else if (key == "steps") config.steps = value.get<int>();
    else if (key == "learning_rate") config.learning_rate = value.get<double>();
    else if (key == "d_m") config.d_m = value.get<int>();
    else if (key == "heads") config.heads = value.get<int>();
    else if (key == "layers") config.layers = value.get<int>();
    else if (key == "ffn") config.ffn = value.get<int>();
    else if (key == "vocab") config.vocab = value.get<int>();
    else if (key == "stage") config.stage = value.get<int>();
    else if (key == "indicator") config.indicator = value.get<std::string>();
    else if (key == "tau") {
      if (value.is_string() && value.get<std::string>() == "inf") {
        config.tau = std::numeric_limits<double>::infinity();
      } else {
        config.tau = value.get<double>();
      }
    } else if (key == "n_groups") config.n_groups = value.get<int>();
    else if (key == "regions") config.regions = value.get<int>();
    else if (key == "max_decode_len") config.max_decode_len = value.get<int>();
    else if (key == "features") config.features_path = value.get<std::string>();
    else if (key == "captions") config.captions_path = value.get<std::string>();
    else if (key == "groups") config.groups_path = value.get<std::string>();
    else throw ValidationError(path + ": unknown config key '" + key + "'");
  }
  return config;
}

void write_train_log(const std::vector<TrainLogEntry>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const TrainLogEntry& entry : log) {
    json line{{"step", entry.step}, {"L_xe", entry.xe},   {"L_d", entry.dis},
              {"L_m", entry.mem},   {"L_r", entry.rl},    {"total", entry.total},
              {"omega", entry.omega}, {"b", entry.bias}};
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace discap
