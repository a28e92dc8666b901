#pragma once

namespace dsc {

inline constexpr int kCorpusSchemaVersion = 1;
inline constexpr int kModelSchemaVersion = 1;
inline constexpr int kRunSchemaVersion = 1;

inline constexpr const char* kLibraryVersion = "0.1.0";

} // namespace dsc
