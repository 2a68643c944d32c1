#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iotmap/catalog.hpp"
#include "iotmap/net.hpp"
#include "iotmap/time.hpp"

namespace iotmap {

enum class Direction : std::uint8_t { downstream = 0, upstream = 1 };

std::string_view direction_name(Direction d);  // down | up
std::optional<Direction> parse_direction(std::string_view s);

struct FlowRecord {
    Timestamp timestamp = 0;
    std::uint64_t line_id = 0;
    IpAddress server_ip;
    std::uint16_t server_port = 0;
    Transport transport = Transport::tcp;
    Direction direction = Direction::downstream;
    std::uint64_t sampled_bytes = 0;
    std::uint32_t sampled_packets = 0;
    std::uint32_t sampling_rate = 1;

    bool operator==(const FlowRecord&) const = default;
};

/// Throws ValidationError when sampling_rate is 0.
void validate_flow(const FlowRecord& f);

// Binary framing: 8-byte magic "IOTBFLW1", u32 version (1), u32 record size (56), then fixed-width
// little-endian records:
//   off  size  field
//    0    8    timestamp (i64, epoch seconds)
//    8    8    line_id (u64)
//   16   16    server_ip (IPv4 in the first 4 bytes, rest zero)
//   32    1    family (4 | 6)
//   33    1    transport (6 tcp | 17 udp)
//   34    1    direction (0 down | 1 up)
//   35    1    reserved (0)
//   36    2    server_port (u16)
//   38    2    reserved (0)
//   40    4    sampled_packets (u32)
//   44    4    sampling_rate (u32)
//   48    8    sampled_bytes (u64)
inline constexpr char kFlowMagic[8] = {'I', 'O', 'T', 'B', 'F', 'L', 'W', '1'};
inline constexpr std::uint32_t kFlowVersion = 1;
inline constexpr std::size_t kFlowRecordSize = 56;

void encode_flow(const FlowRecord& f, std::uint8_t* out);
FlowRecord decode_flow(const std::uint8_t* in);

/// Text form: tab-separated with the header
/// `timestamp line_id server_ip server_port transport direction sampled_bytes sampled_packets sampling_rate`.
std::string flow_text_header();
std::string flow_text_line(const FlowRecord& f);
FlowRecord parse_flow_text(std::string_view line);

/// Appends records to a file in either framing.
class FlowWriter {
public:
    enum class Format { text, binary };
    FlowWriter(const std::filesystem::path& path, Format format);
    ~FlowWriter();
    FlowWriter(const FlowWriter&) = delete;
    FlowWriter& operator=(const FlowWriter&) = delete;

    void write(const FlowRecord& f);
    void close();
    std::size_t written() const { return count_; }

private:
    std::filesystem::path path_, tmp_;
    Format format_;
    std::ofstream out_;
    std::size_t count_ = 0;
    bool closed_ = false;
};

/// Detects the framing from the first bytes and streams records in batches.
void for_each_flow_batch(const std::filesystem::path& path, std::size_t batch,
                         const std::function<void(std::span<const FlowRecord>)>& fn);
std::vector<FlowRecord> read_flows(const std::filesystem::path& path);
void write_flows(const std::filesystem::path& path, std::span<const FlowRecord> flows,
                 FlowWriter::Format format = FlowWriter::Format::binary);

}  // namespace iotmap
