#include "iotmap/flow_io.hpp"

#include <charconv>
#include <cstring>

#include "iotmap/error.hpp"
#include "iotmap/textio.hpp"

namespace iotmap {

namespace {

template <typename T>
void put_le(std::uint8_t* p, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) p[i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

template <typename T>
T parse_uint(std::string_view s, const std::string& src, std::size_t line, const char* field) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ParseError(src, line, field, "expected integer");
    return v;
}

bool has_magic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char head[8] = {};
    in.read(head, 8);
    return in.gcount() == 8 && std::memcmp(head, kFlowMagic, 8) == 0;
}

FlowRecord parse_text_at(std::string_view line, const std::string& src, std::size_t lineno) {
    const auto f = split(line, '\t');
    if (f.size() != 9) throw ParseError(src, lineno, "", "expected 9 tab-separated fields");
    FlowRecord r;
    r.timestamp = parse_uint<std::int64_t>(f[0], src, lineno, "timestamp");
    r.line_id = parse_uint<std::uint64_t>(f[1], src, lineno, "line_id");
    auto ip = IpAddress::parse(f[2]);
    if (!ip) throw ParseError(src, lineno, "server_ip", "invalid address");
    r.server_ip = *ip;
    r.server_port = parse_uint<std::uint16_t>(f[3], src, lineno, "server_port");
    auto tr = parse_transport(f[4]);
    if (!tr) throw ParseError(src, lineno, "transport", "expected tcp or udp");
    r.transport = *tr;
    auto dir = parse_direction(f[5]);
    if (!dir) throw ParseError(src, lineno, "direction", "expected down or up");
    r.direction = *dir;
    r.sampled_bytes = parse_uint<std::uint64_t>(f[6], src, lineno, "sampled_bytes");
    r.sampled_packets = parse_uint<std::uint32_t>(f[7], src, lineno, "sampled_packets");
    r.sampling_rate = parse_uint<std::uint32_t>(f[8], src, lineno, "sampling_rate");
    if (r.sampling_rate == 0) throw ParseError(src, lineno, "sampling_rate", "must be >= 1");
    return r;
}

}  // namespace

std::string_view direction_name(Direction d) { return d == Direction::downstream ? "down" : "up"; }

std::optional<Direction> parse_direction(std::string_view s) {
    if (s == "down" || s == "downstream") return Direction::downstream;
    if (s == "up" || s == "upstream") return Direction::upstream;
    return std::nullopt;
}

void validate_flow(const FlowRecord& f) {
    if (f.sampling_rate == 0) throw ValidationError("flow sampling_rate must be >= 1");
}

void encode_flow(const FlowRecord& f, std::uint8_t* out) {
    std::memset(out, 0, kFlowRecordSize);
    put_le<std::int64_t>(out + 0, f.timestamp);
    put_le<std::uint64_t>(out + 8, f.line_id);
    std::memcpy(out + 16, f.server_ip.bytes().data(), 16);
    out[32] = static_cast<std::uint8_t>(f.server_ip.family());
    out[33] = static_cast<std::uint8_t>(f.transport);
    out[34] = static_cast<std::uint8_t>(f.direction);
    put_le<std::uint16_t>(out + 36, f.server_port);
    put_le<std::uint32_t>(out + 40, f.sampled_packets);
    put_le<std::uint32_t>(out + 44, f.sampling_rate);
    put_le<std::uint64_t>(out + 48, f.sampled_bytes);
}

FlowRecord decode_flow(const std::uint8_t* in) {
    FlowRecord r;
    r.timestamp = get_le<std::int64_t>(in + 0);
    r.line_id = get_le<std::uint64_t>(in + 8);
    if (in[32] == 4) {
        r.server_ip = IpAddress::v4(static_cast<std::uint32_t>(in[16]) << 24 | static_cast<std::uint32_t>(in[17]) << 16 |
                                    static_cast<std::uint32_t>(in[18]) << 8 | in[19]);
    } else if (in[32] == 6) {
        std::array<std::uint8_t, 16> b{};
        std::memcpy(b.data(), in + 16, 16);
        r.server_ip = IpAddress::v6(b);
    } else {
        throw ValidationError("flow record: bad family byte " + std::to_string(in[32]));
    }
    if (in[33] == 6) r.transport = Transport::tcp;
    else if (in[33] == 17) r.transport = Transport::udp;
    else throw ValidationError("flow record: bad transport byte " + std::to_string(in[33]));
    if (in[34] > 1) throw ValidationError("flow record: bad direction byte");
    r.direction = static_cast<Direction>(in[34]);
    r.server_port = get_le<std::uint16_t>(in + 36);
    r.sampled_packets = get_le<std::uint32_t>(in + 40);
    r.sampling_rate = get_le<std::uint32_t>(in + 44);
    r.sampled_bytes = get_le<std::uint64_t>(in + 48);
    validate_flow(r);
    return r;
}

std::string flow_text_header() {
    return "timestamp\tline_id\tserver_ip\tserver_port\ttransport\tdirection\tsampled_bytes\tsampled_packets\tsampling_rate";
}

std::string flow_text_line(const FlowRecord& f) {
    std::string s;
    s.reserve(96);
    s += std::to_string(f.timestamp);
    s += '\t';
    s += std::to_string(f.line_id);
    s += '\t';
    s += f.server_ip.to_string();
    s += '\t';
    s += std::to_string(f.server_port);
    s += '\t';
    s += transport_name(f.transport);
    s += '\t';
    s += direction_name(f.direction);
    s += '\t';
    s += std::to_string(f.sampled_bytes);
    s += '\t';
    s += std::to_string(f.sampled_packets);
    s += '\t';
    s += std::to_string(f.sampling_rate);
    return s;
}

FlowRecord parse_flow_text(std::string_view line) { return parse_text_at(line, "flow", 0); }

FlowWriter::FlowWriter(const std::filesystem::path& path, Format format)
    : path_(path), tmp_(path.string() + ".tmp"), format_(format) {
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write " + tmp_.string());
    if (format_ == Format::binary) {
        std::uint8_t head[16];
        std::memcpy(head, kFlowMagic, 8);
        put_le<std::uint32_t>(head + 8, kFlowVersion);
        put_le<std::uint32_t>(head + 12, static_cast<std::uint32_t>(kFlowRecordSize));
        out_.write(reinterpret_cast<const char*>(head), sizeof head);
    } else {
        out_ << flow_text_header() << '\n';
    }
}

FlowWriter::~FlowWriter() {
    if (!closed_) {
        out_.close();
        std::error_code ec;
        std::filesystem::remove(tmp_, ec);
    }
}

void FlowWriter::write(const FlowRecord& f) {
    if (format_ == Format::binary) {
        std::uint8_t rec[kFlowRecordSize];
        encode_flow(f, rec);
        out_.write(reinterpret_cast<const char*>(rec), sizeof rec);
    } else {
        out_ << flow_text_line(f) << '\n';
    }
    ++count_;
}

void FlowWriter::close() {
    if (closed_) return;
    out_.close();
    if (!out_) throw IoError("write failed: " + tmp_.string());
    std::filesystem::rename(tmp_, path_);
    closed_ = true;
}

void for_each_flow_batch(const std::filesystem::path& path, std::size_t batch,
                         const std::function<void(std::span<const FlowRecord>)>& fn) {
    if (batch == 0) batch = 1;
    std::vector<FlowRecord> buf;
    buf.reserve(batch);
    auto flush = [&] {
        if (!buf.empty()) fn(buf);
        buf.clear();
    };
    if (has_magic(path)) {
        std::ifstream in(path, std::ios::binary);
        std::uint8_t head[16];
        in.read(reinterpret_cast<char*>(head), sizeof head);
        if (in.gcount() != sizeof head) throw ParseError(path.string(), 0, "header", "truncated");
        if (get_le<std::uint32_t>(head + 8) != kFlowVersion)
            throw ParseError(path.string(), 0, "version", "unsupported flow format version");
        if (get_le<std::uint32_t>(head + 12) != kFlowRecordSize)
            throw ParseError(path.string(), 0, "record_size", "unexpected record size");
        std::vector<std::uint8_t> chunk(kFlowRecordSize * batch);
        std::size_t index = 0;
        while (in) {
            in.read(reinterpret_cast<char*>(chunk.data()), static_cast<std::streamsize>(chunk.size()));
            const auto got = static_cast<std::size_t>(in.gcount());
            if (got % kFlowRecordSize != 0)
                throw ParseError(path.string(), 0, "", "truncated record after " + std::to_string(index + got / kFlowRecordSize));
            for (std::size_t off = 0; off < got; off += kFlowRecordSize, ++index) {
                try {
                    buf.push_back(decode_flow(chunk.data() + off));
                } catch (const ValidationError& e) {
                    throw ParseError(path.string(), index + 1, "", e.what());
                }
            }
            flush();
        }
        return;
    }
    const std::string src = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        if (line.starts_with("timestamp")) return;
        buf.push_back(parse_text_at(line, src, lineno));
        if (buf.size() == batch) flush();
    });
    flush();
}

std::vector<FlowRecord> read_flows(const std::filesystem::path& path) {
    std::vector<FlowRecord> out;
    for_each_flow_batch(path, 1 << 16, [&](std::span<const FlowRecord> b) { out.insert(out.end(), b.begin(), b.end()); });
    return out;
}

void write_flows(const std::filesystem::path& path, std::span<const FlowRecord> flows, FlowWriter::Format format) {
    FlowWriter w(path, format);
    for (const auto& f : flows) w.write(f);
    w.close();
}

}  // namespace iotmap
