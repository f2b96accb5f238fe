#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "fcr/core/error.hpp"

namespace fcr {

/// Incremental SHA-256 (OpenSSL EVP) used for artifact hashes.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error(ErrorKind::Io, "cannot initialise SHA-256");
    }
  }

  Sha256& update(std::span<const std::uint8_t> bytes) {
    EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size());
    return *this;
  }
  Sha256& update(std::string_view text) {
    EVP_DigestUpdate(ctx_.get(), text.data(), text.size());
    return *this;
  }
  template <typename T>
  Sha256& update_pod(std::span<const T> items) {
    EVP_DigestUpdate(ctx_.get(), items.data(), items.size_bytes());
    return *this;
  }

  std::string hex_digest() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    EVP_DigestFinal_ex(ctx_.get(), digest.data(), &length);
    std::string out;
    out.reserve(2 * length);
    char buf[3];
    for (unsigned int k = 0; k < length; ++k) {
      std::snprintf(buf, sizeof buf, "%02x", digest[k]);
      out += buf;
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(std::string_view text) { return Sha256().update(text).hex_digest(); }

}  // namespace fcr
