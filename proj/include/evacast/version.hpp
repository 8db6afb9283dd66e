#pragma once

namespace evacast {

inline constexpr const char* kVersion = "0.1.0";

// Version tag written into checkpoint headers and artifact manifests.
inline constexpr unsigned kCheckpointFormatVersion = 1;

}  // namespace evacast
