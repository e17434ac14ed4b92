#pragma once

// Static-model range coder with 64-bit state and carry-less renormalization.
// Payload bytes come out most-significant first. Each coded symbol has its
// own frequency table with total 2^16; symbols are table indices.

#include <cstdint>
#include <span>
#include <vector>

namespace camc {

inline constexpr std::uint32_t kCdfBits = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfBits;

struct CdfTable {
    std::vector<std::uint32_t> cum;  // size n + 1, cum[0] = 0, cum[n] = kCdfTotal

    std::size_t size() const { return cum.empty() ? 0 : cum.size() - 1; }
    std::uint32_t freq(std::size_t s) const { return cum[s + 1] - cum[s]; }
    // Throws ContractError unless strictly increasing from 0 to kCdfTotal.
    void validate() const;
};

// Frequencies max(1, round(p·2^16)), then largest-remainder correction so the
// total is exactly 2^16. ConfigError if the alphabet exceeds 2^16 symbols;
// ContractError if p has negative/non-finite entries or does not sum to 1 ± 1e-6.
CdfTable build_cdf(std::span<const double> pmf);

class RangeEncoder {
public:
    void encode(std::uint32_t cum, std::uint32_t freq);
    void encode_symbol(const CdfTable& table, std::size_t symbol);
    // Flushes the state; the encoder must not be used afterwards.
    std::vector<std::uint8_t> finish();

private:
    void normalize();

    std::uint64_t low_ = 0;
    std::uint64_t range_ = ~std::uint64_t{0};
    std::vector<std::uint8_t> out_;
    bool finished_ = false;
};

class RangeDecoder {
public:
    // Throws DecodeError if the buffer cannot hold the initial state.
    explicit RangeDecoder(std::span<const std::uint8_t> bytes);

    std::size_t decode_symbol(const CdfTable& table);
    // Throws DecodeError unless every byte was consumed.
    void finish() const;

private:
    std::uint8_t next_byte();
    void normalize();

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    std::uint64_t low_ = 0;
    std::uint64_t range_ = ~std::uint64_t{0};
    std::uint64_t code_ = 0;
};

// One table per symbol, in order. ContractError on a symbol outside its table.
std::vector<std::uint8_t> rc_encode(std::span<const std::size_t> symbols, std::span<const CdfTable> tables);
// DecodeError on truncated or trailing bytes, or an impossible code value.
std::vector<std::size_t> rc_decode(std::span<const std::uint8_t> bytes, std::span<const CdfTable> tables);

// Σ −log2(freq/2^16) over the coded symbols.
double ideal_codelength_bits(std::span<const std::size_t> symbols, std::span<const CdfTable> tables);

}  // namespace camc
