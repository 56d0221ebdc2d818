#pragma once

#include "lipcmp/arch.hpp"
#include "lipcmp/complexity.hpp"
#include "lipcmp/conv.hpp"
#include "lipcmp/counter.hpp"
#include "lipcmp/errors.hpp"
#include "lipcmp/layers.hpp"
#include "lipcmp/lt1.hpp"
#include "lipcmp/matrix.hpp"
#include "lipcmp/random.hpp"
#include "lipcmp/spectral.hpp"
#include "lipcmp/tensor.hpp"
#include "lipcmp/verify.hpp"
