#include "camc/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "camc/errors.hpp"

namespace camc {
namespace {

constexpr std::uint64_t kTop = std::uint64_t{1} << 56;
// Low enough that the carry-free range shrink is rare, high enough that
// range >> 16 truncation costs at most 2^-16 of the interval.
constexpr std::uint64_t kBot = std::uint64_t{1} << 32;

}  // namespace

void CdfTable::validate() const {
    if (cum.size() < 2) throw ContractError("cdf table needs at least one symbol");
    if (cum.front() != 0 || cum.back() != kCdfTotal) throw ContractError("cdf table must span [0, 2^16]");
    for (std::size_t i = 1; i < cum.size(); ++i)
        if (cum[i] <= cum[i - 1]) throw ContractError("cdf table not strictly increasing at " + std::to_string(i));
}

CdfTable build_cdf(std::span<const double> pmf) {
    const std::size_t n = pmf.size();
    if (n == 0) throw ContractError("empty pmf");
    if (n > kCdfTotal) throw ConfigError("alphabet of " + std::to_string(n) + " symbols exceeds 2^16");
    double sum = 0.0;
    for (double p : pmf) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ContractError("pmf entries must be finite and non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ContractError("pmf sums to " + std::to_string(sum) + ", expected 1");

    std::vector<std::int64_t> freq(n);
    std::vector<double> excess(n);  // scaled target minus allotted
    std::int64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double target = pmf[i] * kCdfTotal;
        freq[i] = std::max<std::int64_t>(1, std::llround(target));
        excess[i] = target - double(freq[i]);
        total += freq[i];
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::int64_t diff = std::int64_t{kCdfTotal} - total;
    if (diff > 0) {
        // Hand out the missing units to the most under-served symbols.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return excess[a] > excess[b]; });
        for (std::size_t k = 0; diff > 0; k = (k + 1) % n, --diff) ++freq[order[k]];
    } else if (diff < 0) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return excess[a] < excess[b]; });
        while (diff < 0) {
            bool progressed = false;
            for (std::size_t k = 0; k < n && diff < 0; ++k) {
                if (freq[order[k]] > 1) {
                    --freq[order[k]];
                    ++diff;
                    progressed = true;
                }
            }
            if (!progressed) throw ConfigError("alphabet too large for the minimum frequency");
        }
    }

    CdfTable t;
    t.cum.resize(n + 1);
    t.cum[0] = 0;
    for (std::size_t i = 0; i < n; ++i) t.cum[i + 1] = t.cum[i] + static_cast<std::uint32_t>(freq[i]);
    return t;
}

// ---- encoder ---------------------------------------------------------------------

void RangeEncoder::normalize() {
    while (true) {
        if ((low_ ^ (low_ + range_)) >= kTop) {
            if (range_ >= kBot) break;
            // Carry-less trick: shrink the range to the next kBot boundary.
            range_ = (0 - low_) & (kBot - 1);
        }
        out_.push_back(static_cast<std::uint8_t>(low_ >> 56));
        low_ <<= 8;
        range_ <<= 8;
    }
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
    if (finished_) throw ContractError("encoder already finished");
    if (freq == 0 || cum + freq > kCdfTotal) throw ContractError("invalid symbol interval");
    range_ >>= kCdfBits;
    low_ += cum * range_;
    range_ *= freq;
    normalize();
}

void RangeEncoder::encode_symbol(const CdfTable& table, std::size_t symbol) {
    if (symbol >= table.size())
        throw ContractError("symbol " + std::to_string(symbol) + " outside an alphabet of " +
                            std::to_string(table.size()));
    encode(table.cum[symbol], table.freq(symbol));
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    if (finished_) throw ContractError("encoder already finished");
    for (int i = 0; i < 8; ++i) {
        out_.push_back(static_cast<std::uint8_t>(low_ >> 56));
        low_ <<= 8;
    }
    finished_ = true;
    return std::move(out_);
}

// ---- decoder ---------------------------------------------------------------------

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
    if (in_.size() < 8) throw DecodeError("range-coded payload shorter than the coder state");
    for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
    if (pos_ >= in_.size()) throw DecodeError("range-coded payload truncated");
    return in_[pos_++];
}

void RangeDecoder::normalize() {
    while (true) {
        if ((low_ ^ (low_ + range_)) >= kTop) {
            if (range_ >= kBot) break;
            range_ = (0 - low_) & (kBot - 1);
        }
        code_ = (code_ << 8) | next_byte();
        low_ <<= 8;
        range_ <<= 8;
    }
}

std::size_t RangeDecoder::decode_symbol(const CdfTable& table) {
    if (table.size() == 0) throw ContractError("empty cdf table");
    range_ >>= kCdfBits;
    const std::uint64_t v = (code_ - low_) / range_;
    if (v >= kCdfTotal) throw DecodeError("corrupt range-coded payload");
    const auto it = std::upper_bound(table.cum.begin(), table.cum.end(), static_cast<std::uint32_t>(v));
    const std::size_t s = static_cast<std::size_t>(it - table.cum.begin()) - 1;
    low_ += table.cum[s] * range_;
    range_ *= table.freq(s);
    normalize();
    return s;
}

void RangeDecoder::finish() const {
    if (pos_ != in_.size())
        throw DecodeError(std::to_string(in_.size() - pos_) + " trailing bytes after the range-coded payload");
}

// ---- helpers ---------------------------------------------------------------------

std::vector<std::uint8_t> rc_encode(std::span<const std::size_t> symbols, std::span<const CdfTable> tables) {
    if (symbols.size() != tables.size()) throw DimensionError("one cdf table per symbol required");
    RangeEncoder enc;
    for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode_symbol(tables[i], symbols[i]);
    return enc.finish();
}

std::vector<std::size_t> rc_decode(std::span<const std::uint8_t> bytes, std::span<const CdfTable> tables) {
    RangeDecoder dec(bytes);
    std::vector<std::size_t> out(tables.size());
    for (std::size_t i = 0; i < tables.size(); ++i) out[i] = dec.decode_symbol(tables[i]);
    dec.finish();
    return out;
}

double ideal_codelength_bits(std::span<const std::size_t> symbols, std::span<const CdfTable> tables) {
    if (symbols.size() != tables.size()) throw DimensionError("one cdf table per symbol required");
    double bits = 0.0;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (symbols[i] >= tables[i].size()) throw ContractError("symbol outside its alphabet");
        bits -= std::log2(double(tables[i].freq(symbols[i])) / kCdfTotal);
    }
    return bits;
}

}  // namespace camc
