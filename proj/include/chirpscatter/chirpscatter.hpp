#ifndef CHIRPSCATTER_CHIRPSCATTER_HPP
#define CHIRPSCATTER_CHIRPSCATTER_HPP

/** @mainpage chirpscatter
 *
 * A desk-scale laboratory for wide-area LoRa backscatter: chirp spread
 * spectrum symbol math, harmonic-cancelled backscatter waveform synthesis,
 * LoRa-compatible framing, two-hop channel and receiver simulation, and a
 * TDMA link layer, plus a configuration-driven experiment CLI.
 */

#include "chirpscatter/channel.hpp"
#include "chirpscatter/config.hpp"
#include "chirpscatter/css.hpp"
#include "chirpscatter/errors.hpp"
#include "chirpscatter/experiments.hpp"
#include "chirpscatter/fft.hpp"
#include "chirpscatter/frame.hpp"
#include "chirpscatter/iq.hpp"
#include "chirpscatter/mac.hpp"
#include "chirpscatter/rng.hpp"
#include "chirpscatter/waveform.hpp"

#endif
