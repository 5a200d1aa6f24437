#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace strata {

/// 20-byte content-derived binary identifier, rendered as 40 lowercase hex
/// characters. Equality is byte equality.
class BuildId {
  public:
    static constexpr size_t kSize = 20;

    BuildId() = default;
    explicit BuildId(const std::array<uint8_t, kSize>& bytes) : bytes_(bytes) {}

    /// Digest of an arbitrary byte string (SHA-1, which is exactly 20 bytes).
    static BuildId digest(std::span<const uint8_t> data);
    static BuildId digest(std::string_view data);

    /// Parses 40 hex characters; throws strata::Error on malformed input.
    static BuildId from_hex(std::string_view hex);

    std::string hex() const;
    const std::array<uint8_t, kSize>& bytes() const { return bytes_; }

    bool operator==(const BuildId&) const = default;
    auto operator<=>(const BuildId&) const = default;

  private:
    std::array<uint8_t, kSize> bytes_{};
};

struct BuildIdHash {
    size_t operator()(const BuildId& id) const {
        size_t h = 0;
        for (uint8_t b : id.bytes()) h = h * 131 + b;
        return h;
    }
};

/// Base error type for construction/parse failures in this library.
class Error : public std::exception {
  public:
    explicit Error(std::string msg) : msg_(std::move(msg)) {}
    const char* what() const noexcept override { return msg_.c_str(); }

  private:
    std::string msg_;
};

}  // namespace strata
