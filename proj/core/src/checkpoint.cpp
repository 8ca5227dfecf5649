// SPDX-License-Identifier: Apache-2.0
#include "vct/checkpoint.hpp"

#include <cstring>

#include "vct/io.hpp"

namespace vct {

namespace {

constexpr char kMagic[8] = {'V', 'C', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr std::size_t kMagicLen = sizeof(kMagic);
constexpr std::size_t kConfigFields = 8;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFFu));
  out.push_back(static_cast<char>((v >> 8) & 0xFFu));
  out.push_back(static_cast<char>((v >> 16) & 0xFFu));
  out.push_back(static_cast<char>((v >> 24) & 0xFFu));
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
  const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])); };
  return b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

float get_f32(const std::string& s, std::size_t off) {
  const std::uint32_t bits = get_u32(s, off);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

std::string serialize_checkpoint(const ViTModel& model) {
  model.cfg.validate();
  std::string body;
  const int fields[kConfigFields] = {model.cfg.image_size, model.cfg.patch_size, model.cfg.channels,
                                     model.cfg.embed_dim,  model.cfg.num_layers, model.cfg.num_heads,
                                     model.cfg.mlp_ratio,  model.cfg.num_classes};
  for (int f : fields) put_u32(body, static_cast<std::uint32_t>(f));
  ParamSet params = all_params(const_cast<ViTModel&>(model));
  for (const auto& [name, tensor] : params.items) {
    (void)name;
    for (Real v : tensor->vec()) put_f32(body, static_cast<float>(v));
  }
  put_u32(body, crc32(body.data(), body.size()));
  return std::string(kMagic, kMagicLen) + body;
}

ViTModel parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicLen + kConfigFields * 4 + 4) throw IoError("checkpoint truncated: only " +
                                                                      std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) throw IoError("checkpoint magic mismatch");

  const std::size_t body_len = bytes.size() - kMagicLen - 4;
  const std::uint32_t stored = get_u32(bytes, kMagicLen + body_len);
  const std::uint32_t actual = crc32(bytes.data() + kMagicLen, body_len);
  if (stored != actual) throw IoError("checkpoint checksum mismatch");

  std::size_t off = kMagicLen;
  int fields[kConfigFields];
  for (std::size_t i = 0; i < kConfigFields; ++i, off += 4) fields[i] = static_cast<std::int32_t>(get_u32(bytes, off));
  ViTConfig cfg;
  cfg.image_size = fields[0];
  cfg.patch_size = fields[1];
  cfg.channels = fields[2];
  cfg.embed_dim = fields[3];
  cfg.num_layers = fields[4];
  cfg.num_heads = fields[5];
  cfg.mlp_ratio = fields[6];
  cfg.num_classes = fields[7];

  ViTModel model = make_model(cfg);  // validates cfg
  ParamSet params = all_params(model);
  std::size_t total = 0;
  for (const auto& item : params.items) total += item.second->size();
  const std::size_t expect = kMagicLen + kConfigFields * 4 + total * 4 + 4;
  if (bytes.size() != expect)
    throw IoError("checkpoint size mismatch: got " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(expect));
  for (const auto& [name, tensor] : params.items) {
    (void)name;
    for (Real& v : tensor->vec()) {
      v = static_cast<Real>(get_f32(bytes, off));
      off += 4;
    }
  }
  return model;
}

void save_checkpoint(const std::string& path, const ViTModel& model) {
  write_file_atomic(path, serialize_checkpoint(model));
}

ViTModel load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

}  // namespace vct
