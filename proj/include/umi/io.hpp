#pragma once

#include <string>

#include "umi/correct.hpp"

namespace umi {

// All files are little-endian. Lengths in mm, times in us, frequencies in
// MHz, sound speeds in mm/us, exactly as held in memory, so a round trip
// is byte-exact.

/// Raw reflection matrix, magic "UMR1".
void write_raw(const ReflectionMatrixRaw& raw, const std::string& path);
ReflectionMatrixRaw read_raw(const std::string& path);

/// Focused matrix with provenance, magic "UMF1".
void write_focused(const FocusedRMatrix& f, const std::string& path);
FocusedRMatrix read_focused(const std::string& path);

/// Transmission-estimate stack, magic "UMT1".
void write_laws(const TransmissionEstimate& est, const std::string& path);
TransmissionEstimate read_laws(const std::string& path);

/// Raw float32 volume with a text sidecar (<path>.meta) giving dimensions,
/// spacing and origin.
void write_volume(const ConfocalVolume& volume, const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace umi
