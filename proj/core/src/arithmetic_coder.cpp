#include "cvq/arithmetic_coder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cvq {

namespace {

constexpr uint32_t kTotal = 1u << 16;
constexpr uint32_t kHalf = 1u << 31;
constexpr uint32_t kQuarter = 1u << 30;
constexpr uint32_t kThreeQuarters = 3u << 30;

}  // namespace

void BitWriter::append(int bit) {
    partial_ = static_cast<uint8_t>((partial_ << 1) | (bit & 1));
    ++bit_count_;
    if (++partial_bits_ == 8) {
        bytes_.push_back(partial_);
        partial_ = 0;
        partial_bits_ = 0;
    }
}

void BitWriter::append_run(int bit, uint64_t count) {
    for (uint64_t i = 0; i < count; ++i) append(bit);
}

std::vector<uint8_t> BitWriter::take() {
    while (partial_bits_ != 0) append(0);
    return std::move(bytes_);
}

int BitReader::next() {
    if (byte_pos_ >= bytes_.size()) return 0;
    int bit = (bytes_[byte_pos_] >> (7 - bit_pos_)) & 1;
    if (++bit_pos_ == 8) {
        bit_pos_ = 0;
        ++byte_pos_;
    }
    return bit;
}

FrequencyTable frequency_table_from_counts(const std::vector<uint32_t>& freq) {
    if (freq.empty()) throw std::invalid_argument("frequency table: no symbols");
    FrequencyTable t;
    t.cum.resize(freq.size() + 1, 0);
    for (size_t i = 0; i < freq.size(); ++i) {
        if (freq[i] == 0) throw std::invalid_argument("frequency table: zero frequency");
        t.cum[i + 1] = t.cum[i] + freq[i];
    }
    if (t.cum.back() != kTotal)
        throw std::invalid_argument("frequency table: frequencies must sum to 65536");
    return t;
}

FrequencyTable quantize_pmf(const std::vector<double>& pmf) {
    if (pmf.empty()) throw std::invalid_argument("quantize_pmf: empty pmf");
    if (pmf.size() > 4096) throw std::invalid_argument("quantize_pmf: alphabet too large");
    double sum = 0.0;
    for (double p : pmf) {
        if (!std::isfinite(p) || p < 0.0)
            throw std::invalid_argument("quantize_pmf: probabilities must be finite and >= 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("quantize_pmf: probabilities sum to " + std::to_string(sum));
    std::vector<uint32_t> freq(pmf.size());
    int64_t assigned = 0;
    for (size_t i = 0; i < pmf.size(); ++i) {
        freq[i] = std::max<uint32_t>(
            1, static_cast<uint32_t>(std::floor(pmf[i] * static_cast<double>(kTotal))));
        assigned += freq[i];
    }
    int64_t deficit = static_cast<int64_t>(kTotal) - assigned;
    size_t top = static_cast<size_t>(
        std::max_element(freq.begin(), freq.end()) - freq.begin());  // lowest index on ties
    int64_t adjusted = static_cast<int64_t>(freq[top]) + deficit;
    if (adjusted < 1)
        throw std::invalid_argument("quantize_pmf: alphabet too large for 16-bit frequencies");
    freq[top] = static_cast<uint32_t>(adjusted);
    return frequency_table_from_counts(freq);
}

void ArithmeticEncoder::renormalize() {
    for (;;) {
        if (high_ < kHalf) {
            writer_.append(0);
            writer_.append_run(1, pending_);
            pending_ = 0;
        } else if (low_ >= kHalf) {
            writer_.append(1);
            writer_.append_run(0, pending_);
            pending_ = 0;
            low_ -= kHalf;
            high_ -= kHalf;
        } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
            ++pending_;
            low_ -= kQuarter;
            high_ -= kQuarter;
        } else {
            break;
        }
        low_ <<= 1;
        high_ = (high_ << 1) | 1;
    }
}

void ArithmeticEncoder::encode(const FrequencyTable& table, int symbol) {
    if (finished_) throw std::logic_error("arithmetic encoder: already finished");
    if (symbol < 0 || symbol >= table.symbols())
        throw std::invalid_argument("arithmetic encoder: symbol out of range");
    uint64_t span = static_cast<uint64_t>(high_) - low_ + 1;
    uint32_t base = low_;
    high_ = base + static_cast<uint32_t>(span * table.cum[symbol + 1] / kTotal) - 1;
    low_ = base + static_cast<uint32_t>(span * table.cum[symbol] / kTotal);
    renormalize();
}

std::vector<uint8_t> ArithmeticEncoder::finish() {
    if (finished_) throw std::logic_error("arithmetic encoder: already finished");
    finished_ = true;
    ++pending_;
    if (low_ < kQuarter) {
        writer_.append(0);
        writer_.append_run(1, pending_);
    } else {
        writer_.append(1);
        writer_.append_run(0, pending_);
    }
    pending_ = 0;
    return writer_.take();
}

ArithmeticDecoder::ArithmeticDecoder(std::vector<uint8_t> bytes) : reader_(std::move(bytes)) {
    for (int i = 0; i < 32; ++i) code_ = (code_ << 1) | static_cast<uint32_t>(reader_.next());
}

int ArithmeticDecoder::decode(const FrequencyTable& table) {
    uint64_t span = static_cast<uint64_t>(high_) - low_ + 1;
    uint32_t scaled = static_cast<uint32_t>(
        ((static_cast<uint64_t>(code_ - low_) + 1) * kTotal - 1) / span);
    // Only reachable with corrupted input (code outside [low, high]); keep the
    // lookup in range and let the caller's integrity checks reject the result.
    if (scaled >= kTotal) scaled = kTotal - 1;
    auto it = std::upper_bound(table.cum.begin() + 1, table.cum.end(), scaled);
    int symbol = static_cast<int>(it - table.cum.begin()) - 1;
    uint32_t base = low_;
    high_ = base + static_cast<uint32_t>(span * table.cum[symbol + 1] / kTotal) - 1;
    low_ = base + static_cast<uint32_t>(span * table.cum[symbol] / kTotal);
    for (;;) {
        if (high_ < kHalf) {
            // nothing to strip
        } else if (low_ >= kHalf) {
            low_ -= kHalf;
            high_ -= kHalf;
            code_ -= kHalf;
        } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
            low_ -= kQuarter;
            high_ -= kQuarter;
            code_ -= kQuarter;
        } else {
            break;
        }
        low_ <<= 1;
        high_ = (high_ << 1) | 1;
        code_ = (code_ << 1) | static_cast<uint32_t>(reader_.next());
    }
    return symbol;
}

namespace {

std::vector<double> checked_pmf(const PmfProvider& provider, size_t index,
                                const std::vector<int>& prefix) {
    std::vector<double> pmf = provider(index, prefix);
    if (pmf.empty())
        throw std::invalid_argument("pmf provider returned an empty pmf at position " +
                                    std::to_string(index));
    return pmf;
}

}  // namespace

std::vector<uint8_t> encode_symbols(const std::vector<int>& symbols,
                                    const PmfProvider& provider) {
    ArithmeticEncoder enc;
    std::vector<int> prefix;
    prefix.reserve(symbols.size());
    for (size_t i = 0; i < symbols.size(); ++i) {
        std::vector<double> pmf = checked_pmf(provider, i, prefix);
        int s = symbols[i];
        if (s < 0 || s >= static_cast<int>(pmf.size()))
            throw std::invalid_argument("encode_symbols: symbol out of pmf range at position " +
                                        std::to_string(i));
        if (!(pmf[s] > 0.0))
            throw std::invalid_argument(
                "encode_symbols: observed symbol has zero probability at position " +
                std::to_string(i));
        enc.encode(quantize_pmf(pmf), s);
        prefix.push_back(s);
    }
    return enc.finish();
}

std::vector<int> decode_symbols(const std::vector<uint8_t>& stream, size_t count,
                                const PmfProvider& provider) {
    ArithmeticDecoder dec(stream);
    std::vector<int> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i)
        out.push_back(dec.decode(quantize_pmf(checked_pmf(provider, i, out))));
    return out;
}

void write_payload(std::vector<uint8_t>& dst, const std::vector<uint8_t>& payload) {
    if (payload.size() > 0xFFFFFFFFull)
        throw std::invalid_argument("write_payload: payload too large");
    uint32_t n = static_cast<uint32_t>(payload.size());
    dst.push_back(static_cast<uint8_t>(n >> 24));
    dst.push_back(static_cast<uint8_t>(n >> 16));
    dst.push_back(static_cast<uint8_t>(n >> 8));
    dst.push_back(static_cast<uint8_t>(n));
    dst.insert(dst.end(), payload.begin(), payload.end());
}

std::vector<uint8_t> read_payload(const std::vector<uint8_t>& src, size_t& offset) {
    if (offset + 4 > src.size())
        throw std::runtime_error("payload: truncated length prefix");
    uint32_t n = (static_cast<uint32_t>(src[offset]) << 24) |
                 (static_cast<uint32_t>(src[offset + 1]) << 16) |
                 (static_cast<uint32_t>(src[offset + 2]) << 8) |
                 static_cast<uint32_t>(src[offset + 3]);
    offset += 4;
    if (offset + n > src.size()) throw std::runtime_error("payload: truncated body");
    std::vector<uint8_t> out(src.begin() + static_cast<std::ptrdiff_t>(offset),
                             src.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;
    return out;
}

}  // namespace cvq
