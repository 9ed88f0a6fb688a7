#pragma once

#include "ieclof/apci.hpp"
#include "ieclof/csv.hpp"
#include "ieclof/detector.hpp"
#include "ieclof/error.hpp"
#include "ieclof/features.hpp"
#include "ieclof/injector.hpp"
#include "ieclof/kdtree.hpp"
#include "ieclof/lof.hpp"
#include "ieclof/lof_brute_force.hpp"
#include "ieclof/model_io.hpp"
#include "ieclof/pcap.hpp"
#include "ieclof/pcap_writer.hpp"
#include "ieclof/types.hpp"
