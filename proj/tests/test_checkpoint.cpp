#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "plm/checkpoint.hpp"
#include "plm/error.hpp"

using namespace plm;

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(99);
  Checkpoint ckpt;
  ckpt.config = {{"architecture", "encoder_decoder"}, {"embed_dim", "8"}};
  ckpt.tensors.emplace_back("enc.tok_emb", Tensor::randn({5, 8}, rng, 1.0));
  ckpt.tensors.emplace_back("scalar", Tensor::scalar(-0.0));
  ckpt.tensors.emplace_back("empty", Tensor::zeros({0, 8}));
  ckpt.tensors.emplace_back("odd", Tensor({2}, {1e-310, -3.141592653589793}));

  const auto bytes = encode_checkpoint(ckpt);
  CHECK(std::memcmp(bytes.data(), "PLM1", 4) == 0);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.config == ckpt.config);
  REQUIRE(back.tensors.size() == ckpt.tensors.size());
  for (std::size_t i = 0; i < back.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ckpt.tensors[i].first);
    CHECK(back.tensors[i].second.shape() == ckpt.tensors[i].second.shape());
    CHECK(std::memcmp(back.tensors[i].second.data().data(), ckpt.tensors[i].second.data().data(),
                      ckpt.tensors[i].second.numel() * sizeof(double)) == 0);
  }
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(tensor_checksum(back.tensors) == tensor_checksum(ckpt.tensors));

  const auto path = std::filesystem::temp_directory_path() / "plm_ckpt_test.plm";
  save_checkpoint(path, ckpt);
  CHECK(encode_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt containers are rejected") {
  Checkpoint ckpt;
  ckpt.tensors.emplace_back("w", Tensor::zeros({2, 2}));
  auto bytes = encode_checkpoint(ckpt);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), DataError);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bytes), DataError);
}

TEST_CASE("checksum changes with any value") {
  NamedTensors a{{"w", Tensor({2}, {1.0, 2.0})}};
  NamedTensors b{{"w", Tensor({2}, {1.0, 2.0000000000000004})}};
  CHECK(tensor_checksum(a) != tensor_checksum(b));
}
