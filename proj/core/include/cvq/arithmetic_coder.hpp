#pragma once

// Arithmetic coding against externally supplied per-symbol PMFs.
//
// Probabilities are quantized to 16-bit integer frequencies (floor of
// p*65536, minimum 1, rounding deficit added to the largest entry) before
// any coding happens, identically on the encode and decode side, so the
// coding loop itself is pure integer arithmetic and bit-exact across
// platforms. The coder is the classic 32-bit low/high interval scheme with
// a pending-bit counter for carry resolution; measured stream length stays
// within a 64-bit flush/termination allowance of the quantized
// cross-entropy sum.
//
// Decoding feeds zero bits once the input is exhausted (the encoder relies
// on that for its final flush). Handing decode_symbols a PMF provider that
// disagrees with the one used at encode time therefore produces wrong
// symbols, not an error; truncation is detected by the payload container,
// not here.

#include <cstdint>
#include <functional>
#include <vector>

namespace cvq {

// MSB-first bit accumulation into a byte vector.
class BitWriter {
  public:
    void append(int bit);
    void append_run(int bit, uint64_t count);
    // Zero-pads the final partial byte and returns the buffer.
    std::vector<uint8_t> take();
    uint64_t bit_count() const { return bit_count_; }

  private:
    std::vector<uint8_t> bytes_;
    uint8_t partial_ = 0;
    int partial_bits_ = 0;
    uint64_t bit_count_ = 0;
};

// MSB-first bit consumption; reads as zero past the end of the buffer.
class BitReader {
  public:
    explicit BitReader(std::vector<uint8_t> bytes) : bytes_(std::move(bytes)) {}
    int next();

  private:
    std::vector<uint8_t> bytes_;
    size_t byte_pos_ = 0;
    int bit_pos_ = 0;
};

// Cumulative 16-bit frequencies: cum[0] = 0, cum[symbols()] = 65536, and
// every symbol has frequency >= 1.
struct FrequencyTable {
    std::vector<uint32_t> cum;
    int symbols() const { return static_cast<int>(cum.size()) - 1; }
    uint32_t freq(int s) const { return cum[s + 1] - cum[s]; }
};

FrequencyTable frequency_table_from_counts(const std::vector<uint32_t>& freq);

// floor(p * 65536) clamped up to 1 per symbol; the leftover (which may be
// negative) goes to the largest entry, lowest index on ties. This rule is
// part of the stream format: both sides must quantize identically.
FrequencyTable quantize_pmf(const std::vector<double>& pmf);

class ArithmeticEncoder {
  public:
    void encode(const FrequencyTable& table, int symbol);
    // Emits the termination bits and returns the byte stream. Single use.
    std::vector<uint8_t> finish();
    uint64_t bits_written() const { return writer_.bit_count(); }

  private:
    void renormalize();
    BitWriter writer_;
    uint32_t low_ = 0;
    uint32_t high_ = 0xFFFFFFFFu;
    uint64_t pending_ = 0;
    bool finished_ = false;
};

class ArithmeticDecoder {
  public:
    explicit ArithmeticDecoder(std::vector<uint8_t> bytes);
    int decode(const FrequencyTable& table);

  private:
    BitReader reader_;
    uint32_t low_ = 0;
    uint32_t high_ = 0xFFFFFFFFu;
    uint32_t code_ = 0;
};

// PMF source for position `index`; `prefix` holds the symbols for positions
// [0, index), which is exactly what a causal model may condition on. Called
// once per position, in order, on both the encode and decode side.
using PmfProvider =
    std::function<std::vector<double>(size_t index, const std::vector<int>& prefix)>;

// Throws if a PMF is invalid or assigns zero probability to the observed
// symbol.
std::vector<uint8_t> encode_symbols(const std::vector<int>& symbols,
                                    const PmfProvider& provider);
std::vector<int> decode_symbols(const std::vector<uint8_t>& stream, size_t count,
                                const PmfProvider& provider);

// Payload framing used by the bitstream container: big-endian u32 byte
// length followed by the raw bytes.
void write_payload(std::vector<uint8_t>& dst, const std::vector<uint8_t>& payload);
// Reads one payload starting at `offset` and advances it; throws
// std::runtime_error on truncation.
std::vector<uint8_t> read_payload(const std::vector<uint8_t>& src, size_t& offset);

}  // namespace cvq
