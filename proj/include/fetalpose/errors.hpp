#pragma once

#include <stdexcept>
#include <string>

namespace fetalpose {

// Error hierarchy used across the library. Every category maps onto a CLI
// exit code in cli.cpp (config 2, format 3, runtime 4).

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent on-disk data (bad magic, truncated payload,
// header/payload disagreement, architecture mismatch in a checkpoint).
struct FormatError : Error {
    using Error::Error;
};

// Underlying I/O failure (unreadable path, failed write).
struct IoError : Error {
    using Error::Error;
};

// Invalid configuration (bad key, unparsable value, violated invariant).
struct ConfigError : Error {
    using Error::Error;
};

// Phantom spec cannot be realized inside the requested volume.
struct SpecInfeasible : Error {
    using Error::Error;
};

// Segment endpoints coincide; the point-to-segment distance is undefined.
struct DegenerateSegment : Error {
    using Error::Error;
};

// Tensor/layer shape disagreement.
struct ShapeMismatch : Error {
    using Error::Error;
};

// backward() called without a recorded forward pass.
struct GraphNotRecorded : Error {
    using Error::Error;
};

// replay_sample asked for more items than the buffer holds.
struct BufferTooSmall : Error {
    using Error::Error;
};

// A trainer channel (replay/snapshot source) was shut down.
struct ChannelClosed : Error {
    using Error::Error;
};

}  // namespace fetalpose
