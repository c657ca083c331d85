#include <bit>
#include <cstring>

#include "docs2synth/errors.hpp"
#include "docs2synth/retriever.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::retriever {

namespace {

constexpr std::string_view kMagic{"D2SCKPT\0", 8};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

void put_f64s(std::string& out, const std::vector<double>& values) {
  for (double d : values) {
    auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

std::vector<double> get_f64s(std::string_view in, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[k * 8 + static_cast<std::size_t>(i)]))
              << (8 * i);
    }
    out[k] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace

std::string serialize_checkpoint(const RetrieverCheckpoint& ckpt) {
  ckpt.model.check();
  const auto& opt = ckpt.optimizer;
  bool has_opt = !opt.m.empty();
  if (has_opt && (opt.m.size() != ckpt.model.weights.size() || opt.v.size() != ckpt.model.weights.size())) {
    throw ModelError("optimizer state does not match weight count");
  }
  nlohmann::json header{{"version", ckpt.model.version},
                        {"feature_config", ckpt.model.feature_config},
                        {"metadata", ckpt.model.metadata},
                        {"weight_count", ckpt.model.weights.size()},
                        {"optimizer", {{"step", opt.step}, {"moment_count", has_opt ? opt.m.size() : 0}}}};
  auto h = header.dump();
  std::string out(kMagic);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  put_f64s(out, ckpt.model.weights);
  if (has_opt) {
    put_f64s(out, opt.m);
    put_f64s(out, opt.v);
  }
  return out;
}

RetrieverCheckpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw CorruptCheckpoint("missing checkpoint magic");
  }
  auto header_len = get_u32(bytes.substr(kMagic.size(), 4));
  auto body_start = kMagic.size() + 4 + header_len;
  if (body_start > bytes.size()) throw CorruptCheckpoint("header runs past end of file");
  auto header = nlohmann::json::parse(bytes.substr(kMagic.size() + 4, header_len), nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw CorruptCheckpoint("header is not a JSON object");

  RetrieverCheckpoint ckpt;
  try {
    ckpt.model.version = header.at("version").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("header: ") + e.what());
  }
  if (ckpt.model.version != kModelVersion) {
    throw VersionMismatch("checkpoint version " + ckpt.model.version + ", expected " + std::string(kModelVersion));
  }

  std::size_t weight_count = 0, moment_count = 0;
  try {
    ckpt.model.feature_config = header.at("feature_config").get<FeatureConfig>();
    ckpt.model.metadata = header.value("metadata", nlohmann::json::object());
    weight_count = header.at("weight_count").get<std::size_t>();
    ckpt.optimizer.step = header.at("optimizer").at("step").get<std::int64_t>();
    moment_count = header.at("optimizer").at("moment_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("header: ") + e.what());
  }
  if (moment_count != 0 && moment_count != weight_count) {
    throw CorruptCheckpoint("optimizer moment count does not match weight count");
  }
  auto body = bytes.substr(body_start);
  auto expected = 8 * (weight_count + 2 * moment_count);
  if (body.size() != expected) {
    throw CorruptCheckpoint("body has " + std::to_string(body.size()) + " bytes, header implies " +
                            std::to_string(expected));
  }
  ckpt.model.weights = get_f64s(body, weight_count);
  if (moment_count) {
    ckpt.optimizer.m = get_f64s(body.substr(8 * weight_count), moment_count);
    ckpt.optimizer.v = get_f64s(body.substr(8 * (weight_count + moment_count)), moment_count);
  }
  try {
    ckpt.model.check();
  } catch (const ModelError& e) {
    throw CorruptCheckpoint(e.what());
  }
  return ckpt;
}

void save_checkpoint(const RetrieverCheckpoint& ckpt, const std::string& path) {
  text::write_file_atomic(path, serialize_checkpoint(ckpt));
}

void save_checkpoint(const ScoringModel& model, const std::string& path) {
  save_checkpoint(RetrieverCheckpoint{model, {}}, path);
}

RetrieverCheckpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(text::read_file(path)); }

}  // namespace docs2synth::retriever
