#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "qtitle/model.hpp"

namespace qtitle {

// Layout: "Q2Q1", u32 version, config block (length-prefixed key=value text),
// u64 tensor count, tensor blocks in ModelParams::all() order, then the code
// and title vocabularies as length-prefixed vocabulary-file text.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Seq2SeqModel& model, std::ostream& out);
/// Writes to a temporary sibling and renames, so readers never see a partial file.
void save_checkpoint(const Seq2SeqModel& model, const std::string& path);

/// Validates every tensor name and shape against the stored configuration.
/// Throws FormatError (naming the source) on any mismatch or truncation.
Seq2SeqModel load_checkpoint(std::istream& in, const std::string& source = "checkpoint");
Seq2SeqModel load_checkpoint(const std::string& path);

/// Number of load_checkpoint calls in this process.
std::size_t checkpoint_load_count();

/// FNV-1a 64 of a file's bytes, hex encoded.
std::string file_fingerprint(const std::string& path);

}  // namespace qtitle
