#include "kws/tensorio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kws/errors.hpp"

namespace kws {
namespace {

using nlohmann::json;

// All formats are little-endian on disk. The code assumes a little-endian
// host (static_assert below keeps the assumption honest).
static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw format_error("short write to " + path.string());
}

uint32_t read_u32(const char* p) {
    uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
}

void append_u32(std::string& out, uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

struct ChunkedFile {
    json header;
    std::string bytes;         // keeps the payload alive
    size_t payload_offset = 0;

    const char* payload() const { return bytes.data() + payload_offset; }
    size_t payload_bytes() const { return bytes.size() - payload_offset; }
};

ChunkedFile parse_chunked(std::string bytes, const char* magic, const std::string& what) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 4) != 0) {
        throw format_error(what + ": bad magic");
    }
    uint32_t header_len = read_u32(bytes.data() + 4);
    if (bytes.size() < 8 + static_cast<size_t>(header_len)) {
        throw format_error(what + ": truncated header");
    }
    ChunkedFile out;
    try {
        out.header = json::parse(bytes.substr(8, header_len));
    } catch (const json::exception& e) {
        throw format_error(what + ": invalid JSON header: " + e.what());
    }
    out.bytes = std::move(bytes);
    out.payload_offset = 8 + header_len;
    return out;
}

std::string build_chunked(const char* magic, const json& header, const float* payload, size_t count) {
    std::string out;
    std::string hdr = header.dump();
    out.reserve(8 + hdr.size() + count * 4);
    out.append(magic, 4);
    append_u32(out, static_cast<uint32_t>(hdr.size()));
    out += hdr;
    out.append(reinterpret_cast<const char*>(payload), count * 4);
    return out;
}

std::vector<float> take_floats(const ChunkedFile& f, size_t count, const std::string& what) {
    if (f.payload_bytes() < count * 4) {
        throw format_error(what + ": payload shorter than header shape implies");
    }
    if (f.payload_bytes() > count * 4) {
        throw format_error(what + ": trailing bytes after payload");
    }
    std::vector<float> v(count);
    std::memcpy(v.data(), f.payload(), count * 4);
    return v;
}

}  // namespace

void validate_sequence(const EmbeddingSequence& seq) {
    if (seq.length() < 1 || seq.dim() < 1) {
        throw degenerate_input_error("embedding sequence must have T >= 1 and D >= 1");
    }
    if (seq.hop_seconds <= 0.0) {
        throw config_error("embedding sequence hop_seconds must be positive");
    }
    if (!all_finite(seq.frames.data)) {
        throw degenerate_input_error("embedding sequence contains non-finite values");
    }
}

EmbeddingSequence normalize_rows(const EmbeddingSequence& seq) {
    EmbeddingSequence out = seq;
    for (int t = 0; t < out.length(); ++t) {
        auto row = out.frames.row(t);
        double n = norm(row);
        if (n < 1e-8) {
            throw degenerate_input_error("normalize_rows: row " + std::to_string(t) +
                                         " has zero norm");
        }
        for (float& v : row) v = static_cast<float>(v / n);
    }
    return out;
}

void validate_center_bank(const CenterBank& bank) {
    if (bank.n_keywords < 1 || bank.n_positions < 1 || bank.n_clusters < 1) {
        throw format_error("center bank: all counts must be >= 1");
    }
    if (bank.centers.rows != bank.num_centers()) {
        throw format_error("center bank: center count does not match n_kw * n_pos * n_c");
    }
    if (static_cast<int>(bank.keyword_names.size()) != bank.n_keywords) {
        throw format_error("center bank: keyword_names size mismatch");
    }
    for (int i = 0; i < bank.centers.rows; ++i) {
        double n = norm(bank.centers.row(i));
        if (std::abs(n - 1.0) > 1e-5) {
            throw format_error("center bank: center " + std::to_string(i) + " is not unit norm");
        }
    }
}

void validate_audio(const AudioBuffer& audio) {
    static constexpr int kRates[] = {8000, 16000, 22050, 44100, 48000};
    if (std::find(std::begin(kRates), std::end(kRates), audio.sample_rate_hz) == std::end(kRates)) {
        throw config_error("unsupported sample rate " + std::to_string(audio.sample_rate_hz));
    }
    for (float s : audio.samples) {
        if (!std::isfinite(s)) throw degenerate_input_error("audio contains non-finite samples");
    }
}

void validate_annotations(const AnnotationSet& set, const std::vector<std::string>& keyword_names,
                          const std::string& open_set_label) {
    for (const auto& ev : set.events) {
        if (!(ev.onset_seconds < ev.offset_seconds)) {
            throw format_error("annotation for '" + ev.keyword + "' in " + ev.file_id +
                               ": onset must precede offset");
        }
        if (ev.onset_seconds < 0.0) {
            throw format_error("annotation for '" + ev.keyword + "' in " + ev.file_id +
                               ": negative onset");
        }
        if (!keyword_names.empty() && ev.keyword != open_set_label &&
            std::find(keyword_names.begin(), keyword_names.end(), ev.keyword) ==
                keyword_names.end()) {
            throw format_error("annotation keyword '" + ev.keyword + "' not in center bank");
        }
    }
}

// ---------------------------------------------------------------------------
// WAV

namespace {

struct WavChunk {
    uint32_t id = 0;
    const char* data = nullptr;
    uint32_t size = 0;
};

uint32_t fourcc(const char* s) {
    uint32_t v;
    std::memcpy(&v, s, 4);
    return v;
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
    std::string bytes = read_file(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw format_error(path.string() + ": not a RIFF/WAVE file");
    }

    uint16_t format_tag = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    const char* data = nullptr;
    uint32_t data_size = 0;
    bool have_fmt = false;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        uint32_t id = read_u32(bytes.data() + pos);
        uint32_t size = read_u32(bytes.data() + pos + 4);
        if (pos + 8 + size > bytes.size()) {
            throw format_error(path.string() + ": truncated chunk");
        }
        const char* body = bytes.data() + pos + 8;
        if (id == fourcc("fmt ")) {
            if (size < 16) throw format_error(path.string() + ": fmt chunk too small");
            std::memcpy(&format_tag, body, 2);
            std::memcpy(&channels, body + 2, 2);
            sample_rate = read_u32(body + 4);
            std::memcpy(&bits, body + 14, 2);
            if (format_tag == 0xFFFE && size >= 40) {
                // WAVE_FORMAT_EXTENSIBLE: actual format is in the GUID prefix.
                std::memcpy(&format_tag, body + 24, 2);
            }
            have_fmt = true;
        } else if (id == fourcc("data")) {
            data = body;
            data_size = size;
        }
        pos += 8 + size + (size & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr) {
        throw format_error(path.string() + ": missing fmt or data chunk");
    }
    if (channels < 1) throw format_error(path.string() + ": zero channels");

    const bool pcm16 = (format_tag == 1 && bits == 16);
    const bool ieee32 = (format_tag == 3 && bits == 32);
    if (!pcm16 && !ieee32) {
        throw format_error(path.string() + ": unsupported codec (format tag " +
                           std::to_string(format_tag) + ", " + std::to_string(bits) +
                           " bits); only PCM16 and IEEE float32 are supported");
    }

    const uint32_t bytes_per_sample = bits / 8;
    const uint32_t frame_bytes = bytes_per_sample * channels;
    const size_t frames = data_size / frame_bytes;

    AudioBuffer out;
    out.sample_rate_hz = static_cast<int>(sample_rate);
    out.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (uint16_t c = 0; c < channels; ++c) {
            const char* p = data + i * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                int16_t s;
                std::memcpy(&s, p, 2);
                acc += s / 32768.0;
            } else {
                float s;
                std::memcpy(&s, p, 4);
                acc += s;
            }
        }
        out.samples[i] = static_cast<float>(acc / channels);
    }
    validate_audio(out);
    return out;
}

void write_wav(const AudioBuffer& audio, const std::filesystem::path& path, WavFormat format) {
    const uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
    const uint16_t tag = format == WavFormat::pcm16 ? 1 : 3;
    const uint32_t data_size = static_cast<uint32_t>(audio.samples.size()) * (bits / 8);

    std::string out;
    out.reserve(44 + data_size);
    out.append("RIFF", 4);
    append_u32(out, 36 + data_size);
    out.append("WAVE", 4);
    out.append("fmt ", 4);
    append_u32(out, 16);
    auto append_u16 = [&out](uint16_t v) {
        char b[2];
        std::memcpy(b, &v, 2);
        out.append(b, 2);
    };
    append_u16(tag);
    append_u16(1);  // mono
    append_u32(out, static_cast<uint32_t>(audio.sample_rate_hz));
    append_u32(out, static_cast<uint32_t>(audio.sample_rate_hz) * (bits / 8));
    append_u16(bits / 8);
    append_u16(bits);
    out.append("data", 4);
    append_u32(out, data_size);

    for (float s : audio.samples) {
        if (format == WavFormat::pcm16) {
            double scaled = std::round(static_cast<double>(s) * 32768.0);
            int16_t q = static_cast<int16_t>(std::clamp(scaled, -32768.0, 32767.0));
            char b[2];
            std::memcpy(b, &q, 2);
            out.append(b, 2);
        } else {
            char b[4];
            std::memcpy(b, &s, 4);
            out.append(b, 4);
        }
    }
    write_file(path, out);
}

// ---------------------------------------------------------------------------
// ESEQ / CBNK

EmbeddingSequence read_embedding_sequence(const std::filesystem::path& path) {
    ChunkedFile f = parse_chunked(read_file(path), "ESEQ", path.string());
    EmbeddingSequence seq;
    try {
        int t = f.header.at("t").get<int>();
        int d = f.header.at("d").get<int>();
        seq.hop_seconds = f.header.at("hop_seconds").get<double>();
        if (f.header.contains("label") && !f.header["label"].is_null()) {
            seq.label = f.header["label"].get<std::string>();
        }
        if (t < 1 || d < 1) throw format_error(path.string() + ": non-positive shape");
        seq.frames = MatrixF(t, d, take_floats(f, static_cast<size_t>(t) * d, path.string()));
    } catch (const json::exception& e) {
        throw format_error(path.string() + ": bad header field: " + e.what());
    }
    return seq;
}

void write_embedding_sequence(const EmbeddingSequence& seq, const std::filesystem::path& path) {
    json header{{"t", seq.length()},
                {"d", seq.dim()},
                {"hop_seconds", seq.hop_seconds},
                {"label", seq.label ? json(*seq.label) : json(nullptr)}};
    write_file(path, build_chunked("ESEQ", header, seq.frames.data.data(), seq.frames.data.size()));
}

CenterBank read_center_bank(const std::filesystem::path& path) {
    ChunkedFile f = parse_chunked(read_file(path), "CBNK", path.string());
    CenterBank bank;
    int d = 0;
    try {
        d = f.header.at("d").get<int>();
        bank.n_keywords = f.header.at("n_kw").get<int>();
        bank.n_positions = f.header.at("n_pos").get<int>();
        bank.n_clusters = f.header.at("n_c").get<int>();
        bank.keyword_names = f.header.at("keyword_names").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw format_error(path.string() + ": bad header field: " + e.what());
    }
    if (d < 1 || bank.n_keywords < 1 || bank.n_positions < 1 || bank.n_clusters < 1) {
        throw format_error(path.string() + ": non-positive shape");
    }
    if (static_cast<int>(bank.keyword_names.size()) != bank.n_keywords) {
        throw format_error(path.string() + ": keyword_names has " +
                           std::to_string(bank.keyword_names.size()) + " entries, expected " +
                           std::to_string(bank.n_keywords));
    }
    size_t count = static_cast<size_t>(bank.n_keywords) * bank.n_positions * bank.n_clusters * d;
    bank.centers = MatrixF(bank.num_centers(), d, take_floats(f, count, path.string()));

    for (int i = 0; i < bank.centers.rows; ++i) {
        auto row = bank.centers.row(i);
        double n = norm(row);
        if (n < 1e-8) {
            throw format_error(path.string() + ": center " + std::to_string(i) + " has zero norm");
        }
        if (std::abs(n - 1.0) > 1e-3) {
            bank.load_warnings.push_back("center " + std::to_string(i) + " had norm " +
                                         std::to_string(n) + "; re-normalized");
        }
        for (float& v : row) v = static_cast<float>(v / n);
    }
    validate_center_bank(bank);
    return bank;
}

void write_center_bank(const CenterBank& bank, const std::filesystem::path& path) {
    json header{{"d", bank.dim()},
                {"n_kw", bank.n_keywords},
                {"n_pos", bank.n_positions},
                {"n_c", bank.n_clusters},
                {"keyword_names", bank.keyword_names}};
    write_file(path, build_chunked("CBNK", header, bank.centers.data.data(), bank.centers.data.size()));
}

// ---------------------------------------------------------------------------
// TSV annotations / detections

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

bool parse_double(const std::string& s, double& out) {
    try {
        size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size();
    } catch (...) {
        return false;
    }
}

std::string format_seconds(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

AnnotationSet read_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw format_error("cannot open " + path.string());
    AnnotationSet set;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 4) {
            throw format_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 4 tab-separated fields");
        }
        AnnotatedEvent ev;
        ev.file_id = fields[0];
        if (!parse_double(fields[1], ev.onset_seconds)) {
            if (line_no == 1) continue;  // header line
            throw format_error(path.string() + ":" + std::to_string(line_no) +
                               ": non-numeric onset");
        }
        if (!parse_double(fields[2], ev.offset_seconds)) {
            throw format_error(path.string() + ":" + std::to_string(line_no) +
                               ": non-numeric offset");
        }
        ev.keyword = fields[3];
        set.events.push_back(std::move(ev));
    }
    validate_annotations(set);
    return set;
}

void write_annotations(const AnnotationSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw format_error("cannot open " + path.string() + " for writing");
    for (const auto& ev : set.events) {
        out << ev.file_id << '\t' << format_seconds(ev.onset_seconds) << '\t'
            << format_seconds(ev.offset_seconds) << '\t' << ev.keyword << '\n';
    }
}

std::vector<DetectionEvent> read_detections(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw format_error("cannot open " + path.string());
    std::vector<DetectionEvent> events;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 5) {
            throw format_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 5 tab-separated fields");
        }
        DetectionEvent ev;
        ev.file_id = fields[0];
        if (!parse_double(fields[1], ev.onset_seconds)) {
            if (line_no == 1) continue;
            throw format_error(path.string() + ":" + std::to_string(line_no) +
                               ": non-numeric onset");
        }
        if (!parse_double(fields[2], ev.offset_seconds) || !parse_double(fields[4], ev.score)) {
            throw format_error(path.string() + ":" + std::to_string(line_no) + ": bad numeric field");
        }
        ev.keyword = fields[3];
        events.push_back(std::move(ev));
    }
    return events;
}

void write_detections(const std::vector<DetectionEvent>& events, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw format_error("cannot open " + path.string() + " for writing");
    for (const auto& ev : events) {
        char score[32];
        std::snprintf(score, sizeof(score), "%.9g", ev.score);
        out << ev.file_id << '\t' << format_seconds(ev.onset_seconds) << '\t'
            << format_seconds(ev.offset_seconds) << '\t' << ev.keyword << '\t' << score << '\n';
    }
}

}  // namespace kws
