#pragma once

#include <cstddef>

namespace alnp3 {

// Structural hyperparameters shared by every model component.
struct ModelConfig {
  std::size_t d_query = 32;        // fast-stack token width
  std::size_t d_lang = 32;         // language width
  std::size_t decoder_layers = 2;
  std::size_t ffn_hidden = 64;
  std::size_t max_positions = 32;  // decoder sequence limit
  std::size_t pool = 4;            // BEV average-pooling window
  std::size_t bank_size = 8;       // prompt tokens per bank
  std::size_t bank_dim = 16;
  std::size_t text_dim = 32;       // frozen text embedding width
  std::size_t head_hidden = 32;    // projection head hidden width
  double velocity_scale = 0.2;     // m/s -> network units
  double position_scale = 0.1;     // m -> network units for trajectory features
  double trajectory_scale = 1.0;   // network units -> m per step
  double logit_scale = 0.1;        // answer logits -> alignment head input
  double head_gain = 1.0;          // output gain of alignment projection heads
  double head_bias_std = 1.0;      // alignment head output bias spread
  bool operator==(const ModelConfig&) const = default;
};

}  // namespace alnp3
