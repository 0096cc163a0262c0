#include "nextmin/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "nextmin/domain_io.hpp"
#include "nextmin/error.hpp"
#include "nextmin/random.hpp"
#include "nextmin/sample_cache.hpp"

namespace nextmin {

namespace {

constexpr std::string_view kMagic = "NXMNCKPT";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::corrupt, "checkpoint is truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }

  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

Json tensor_entry(const Tensor& t, std::string_view kind) {
  return {{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"kind", kind}};
}

}  // namespace

std::string encode_checkpoint(const ModelBundle& bundle) {
  const auto& model = bundle.model;
  const auto& shape = model.shape();
  Json tensors = Json::array();
  std::size_t value_count = 0;
  for (const auto& t : model.parameters()) {
    tensors.push_back(tensor_entry(t, "parameter"));
    value_count += t.values.size();
  }
  for (const auto& t : model.buffers()) {
    tensors.push_back(tensor_entry(t, "buffer"));
    value_count += t.values.size();
  }
  Json header = {
      {"format", "nextmin.checkpoint"},
      {"architecture",
       {{"head_width", shape.input.head_width},
        {"tail_width", shape.input.tail_width},
        {"k", shape.input.k},
        {"n_labels", shape.n_labels},
        {"embed_dim", shape.embed_dim},
        {"hidden", shape.hidden}}},
      {"batch_norm", {{"momentum", model.batch_norm().momentum}, {"epsilon", model.batch_norm().epsilon}}},
      {"optimizer",
       {{"name", "adam"},
        {"learning_rate", bundle.optimizer.learning_rate},
        {"beta1", bundle.optimizer.beta1},
        {"beta2", bundle.optimizer.beta2},
        {"epsilon", bundle.optimizer.epsilon}}},
      {"gamma", bundle.gamma},
      {"mask", bundle.mask.to_string()},
      {"normalizer", normalizer_to_json(bundle.stats)},
      {"catalog_hash", bundle.catalog_hash},
      {"k", bundle.k},
      {"sample_seed", bundle.sample_seed},
      {"thresholds", bundle.thresholds ? thresholds_to_json(*bundle.thresholds) : Json(nullptr)},
      {"tensors", std::move(tensors)},
  };
  const std::string header_text = header.dump();

  std::string out;
  out.reserve(kMagic.size() + 32 + header_text.size() + 8 * value_count);
  out.append(kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, 0);
  put_u64(out, header_text.size());
  out.append(header_text);
  put_u64(out, value_count);
  auto put_values = [&](const std::vector<Tensor>& ts) {
    for (const auto& t : ts) {
      for (double v : t.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  };
  put_values(model.parameters());
  put_values(model.buffers());
  put_u64(out, fnv1a(out));
  return out;
}

ModelBundle decode_checkpoint(std::string_view bytes,
                              std::optional<std::uint64_t> expected_catalog_hash) {
  Reader in(bytes);
  if (bytes.size() < kMagic.size() || in.take(kMagic.size()) != kMagic) {
    throw Error(ErrorCode::corrupt, "not a nextmin checkpoint");
  }
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::version_mismatch,
                "checkpoint version " + std::to_string(version) + " is not supported");
  }
  in.u32();
  const auto header_len = in.u64();
  if (header_len > in.remaining()) throw Error(ErrorCode::corrupt, "checkpoint is truncated");
  const auto header_text = in.take(header_len);
  const auto value_count = in.u64();
  if (value_count > in.remaining() / 8) throw Error(ErrorCode::corrupt, "checkpoint is truncated");
  const auto payload = in.take(8 * value_count);
  const std::size_t checked = in.position();
  if (in.u64() != fnv1a(bytes.substr(0, checked))) {
    throw Error(ErrorCode::corrupt, "checkpoint checksum mismatch");
  }
  if (in.remaining() != 0) throw Error(ErrorCode::corrupt, "trailing bytes after checkpoint");

  Json header;
  try {
    header = Json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::corrupt, std::string("checkpoint header: ") + e.what());
  }

  ModelBundle bundle;
  try {
    bundle.catalog_hash = header.at("catalog_hash").get<std::uint64_t>();
    if (expected_catalog_hash && *expected_catalog_hash != bundle.catalog_hash) {
      throw Error(ErrorCode::catalog_mismatch,
                  "checkpoint was trained against a different activity catalog");
    }
    const auto& arch = header.at("architecture");
    ModelShape shape;
    shape.input.head_width = arch.at("head_width").get<std::size_t>();
    shape.input.tail_width = arch.at("tail_width").get<std::size_t>();
    shape.input.k = arch.at("k").get<std::size_t>();
    shape.n_labels = arch.at("n_labels").get<std::size_t>();
    shape.embed_dim = arch.at("embed_dim").get<std::size_t>();
    shape.hidden = arch.at("hidden").get<std::vector<std::size_t>>();
    BatchNormSettings bn{header.at("batch_norm").at("momentum").get<double>(),
                         header.at("batch_norm").at("epsilon").get<double>()};

    std::vector<Tensor> params;
    std::vector<Tensor> buffers;
    std::size_t offset = 0;
    for (const auto& entry : header.at("tensors")) {
      Tensor t;
      t.name = entry.at("name").get<std::string>();
      t.rows = entry.at("rows").get<std::size_t>();
      t.cols = entry.at("cols").get<std::size_t>();
      const std::size_t n = t.rows * t.cols;
      if (offset + n > value_count) throw Error(ErrorCode::corrupt, "tensor table exceeds payload");
      t.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t raw = 0;
        const char* p = payload.data() + 8 * (offset + i);
        for (int b = 7; b >= 0; --b) raw = (raw << 8) | static_cast<unsigned char>(p[b]);
        t.values[i] = std::bit_cast<double>(raw);
      }
      offset += n;
      (entry.at("kind").get<std::string>() == "buffer" ? buffers : params).push_back(std::move(t));
    }
    if (offset != value_count) throw Error(ErrorCode::corrupt, "payload size does not match tensors");
    bundle.model = restore_model(std::move(shape), bn, std::move(params), std::move(buffers));

    const auto& opt = header.at("optimizer");
    bundle.optimizer = {opt.at("learning_rate").get<double>(), opt.at("beta1").get<double>(),
                        opt.at("beta2").get<double>(), opt.at("epsilon").get<double>()};
    bundle.gamma = header.at("gamma").get<double>();
    bundle.mask = ContextMask::parse(header.at("mask").get<std::string>());
    bundle.stats = normalizer_from_json(header.at("normalizer"));
    bundle.k = header.at("k").get<std::size_t>();
    bundle.sample_seed = header.at("sample_seed").get<std::uint64_t>();
    if (!header.at("thresholds").is_null()) {
      bundle.thresholds = thresholds_from_json(header.at("thresholds"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::corrupt, std::string("checkpoint header: ") + e.what());
  }
  return bundle;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle) {
  write_text_file(path, encode_checkpoint(bundle));
}

ModelBundle load_checkpoint(const std::filesystem::path& path,
                            std::optional<std::uint64_t> expected_catalog_hash) {
  return decode_checkpoint(read_text_file(path), expected_catalog_hash);
}

}  // namespace nextmin
