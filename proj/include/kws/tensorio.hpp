#pragma once

#include <filesystem>
#include <string>

#include "kws/types.hpp"

namespace kws {

// Binary interchange formats. Both carry a JSON header so external tooling
// can produce them without linking this library:
//   ESEQ: "ESEQ" | u32le header length | JSON {"t","d","hop_seconds","label"} |
//         t*d float32 little-endian, row-major.
//   CBNK: "CBNK" | u32le header length | JSON {"d","n_kw","n_pos","n_c",
//         "keyword_names"} | n_kw*n_pos*n_c*d float32 little-endian,
//         keyword-major, positions next, clusters contiguous.

enum class WavFormat { pcm16, float32 };

AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const AudioBuffer& audio, const std::filesystem::path& path,
               WavFormat format = WavFormat::pcm16);

EmbeddingSequence read_embedding_sequence(const std::filesystem::path& path);
void write_embedding_sequence(const EmbeddingSequence& seq, const std::filesystem::path& path);

/// Loads a center bank. Center rows are re-normalized to unit norm; rows
/// whose norm deviates from 1 by more than 1e-3 add a note to
/// bank.load_warnings.
CenterBank read_center_bank(const std::filesystem::path& path);
void write_center_bank(const CenterBank& bank, const std::filesystem::path& path);

/// TSV, one event per line: file_id, onset_s, offset_s, keyword. A header
/// line is skipped when its second field is not numeric.
AnnotationSet read_annotations(const std::filesystem::path& path);
void write_annotations(const AnnotationSet& set, const std::filesystem::path& path);

/// Detections use the annotation schema plus a trailing score column.
std::vector<DetectionEvent> read_detections(const std::filesystem::path& path);
void write_detections(const std::vector<DetectionEvent>& events, const std::filesystem::path& path);

}  // namespace kws
