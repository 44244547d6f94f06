//! Measured mapping data for two Sandy Bridge Xeon parts, kept as reference
//! tables for comparison and as planted ground truth in tests.

use std::collections::BTreeMap;

// Columns are slices; entries are a2 values at one set index.
const FOUR_CORE_COLUMNS: [&[u16]; 4] = [
    &[
        0x4000, 0x4007, 0x4009, 0x400e, 0x4013, 0x4014, 0x401a, 0x401d, 0x4021, 0x4026, 0x4028,
        0x402f, 0x4032, 0x4035, 0x403b, 0x403c,
    ],
    &[
        0x4001, 0x4006, 0x4008, 0x400f, 0x4012, 0x4015, 0x401b, 0x401c, 0x4020, 0x4027, 0x4029,
        0x402e, 0x4033, 0x4034, 0x403a, 0x403d,
    ],
    &[
        0x4002, 0x4005, 0x400b, 0x400c, 0x4011, 0x4016, 0x4018, 0x401f, 0x4023, 0x4024, 0x402a,
        0x402d, 0x4030, 0x4037, 0x4039, 0x403e,
    ],
    &[
        0x4003, 0x4004, 0x400a, 0x400d, 0x4010, 0x4017, 0x4019, 0x401e, 0x4022, 0x4025, 0x402b,
        0x402c, 0x4031, 0x4036, 0x4038, 0x403f,
    ],
];

const SIX_CORE_SET1_COLUMNS: [&[u16]; 6] = [
    &[
        0x4000, 0x400d, 0x4017, 0x401a, 0x401d, 0x4023, 0x4029, 0x402e, 0x4034, 0x4039, 0x4041,
        0x4046, 0x404b, 0x4051, 0x405c, 0x4065, 0x4068, 0x406f, 0x4072, 0x4075, 0x407f,
    ],
    &[
        0x4001, 0x4006, 0x400c, 0x4016, 0x401b, 0x401c, 0x4022, 0x4028, 0x402f, 0x4035, 0x4038,
        0x4040, 0x4047, 0x404a, 0x4050, 0x405d, 0x4064, 0x4069, 0x4073, 0x4074, 0x407e,
    ],
    &[
        0x4002, 0x4005, 0x4008, 0x4012, 0x401f, 0x4026, 0x402b, 0x402c, 0x4031, 0x4036, 0x403c,
        0x4043, 0x404e, 0x4054, 0x4059, 0x405e, 0x4060, 0x406a, 0x406d, 0x4077, 0x407a,
    ],
    &[
        0x4003, 0x4004, 0x4009, 0x4013, 0x401e, 0x4027, 0x402a, 0x4030, 0x4037, 0x403d, 0x4042,
        0x4045, 0x404f, 0x4055, 0x4058, 0x405f, 0x4061, 0x406b, 0x406c, 0x4076, 0x407b,
    ],
    &[
        0x4007, 0x400a, 0x400b, 0x4010, 0x4011, 0x4024, 0x4025, 0x4032, 0x4033, 0x403e, 0x403f,
        0x404c, 0x404d, 0x4056, 0x4057, 0x405a, 0x405b, 0x4062, 0x4063, 0x406e, 0x4078, 0x4079,
    ],
    &[
        0x400e, 0x400f, 0x4014, 0x4015, 0x4018, 0x4019, 0x4020, 0x4021, 0x402d, 0x403a, 0x403b,
        0x4044, 0x4048, 0x4049, 0x4052, 0x4053, 0x4066, 0x4067, 0x4070, 0x4071, 0x407c, 0x407d,
    ],
];

/// Set indexes 0..127 of the 6-core part grouped by shared mapping table;
/// row `k` holds the set indexes of table `k + 1`.
pub const SIX_CORE_TABLE_SHARING: [[u16; 4]; 32] = [
    [0, 2, 65, 67],
    [1, 3, 64, 66],
    [4, 6, 69, 71],
    [5, 7, 68, 70],
    [8, 10, 73, 75],
    [9, 11, 72, 74],
    [12, 14, 77, 79],
    [13, 15, 76, 78],
    [16, 18, 81, 83],
    [17, 19, 80, 82],
    [20, 22, 85, 87],
    [21, 23, 84, 86],
    [24, 26, 89, 91],
    [25, 27, 88, 90],
    [28, 30, 93, 95],
    [29, 31, 92, 94],
    [32, 34, 97, 99],
    [33, 35, 96, 98],
    [36, 38, 101, 103],
    [37, 39, 100, 102],
    [40, 42, 105, 107],
    [41, 43, 104, 106],
    [44, 46, 109, 111],
    [45, 47, 108, 110],
    [48, 50, 113, 115],
    [49, 51, 112, 114],
    [52, 54, 117, 119],
    [53, 55, 116, 118],
    [56, 58, 121, 123],
    [57, 59, 120, 122],
    [60, 62, 125, 127],
    [61, 63, 124, 126],
];

fn columns_to_table(columns: &[&[u16]]) -> BTreeMap<u64, u32> {
    columns
        .iter()
        .enumerate()
        .flat_map(|(slice, col)| col.iter().map(move |&a2| (a2 as u64, slice as u32)))
        .collect()
}

/// 4-core mapping table: a2 0x4000..=0x403f to slice, identical for every set index.
pub fn four_core_table() -> BTreeMap<u64, u32> {
    columns_to_table(&FOUR_CORE_COLUMNS)
}

/// 6-core mapping table at set index 1: a2 0x4000..=0x407f to slice.
pub fn six_core_set1_table() -> BTreeMap<u64, u32> {
    columns_to_table(&SIX_CORE_SET1_COLUMNS)
}

/// The 6-core table ordinal (1-based) for set indexes 0..127.
pub fn six_core_table_ordinal(set_index: u64) -> Option<u32> {
    SIX_CORE_TABLE_SHARING
        .iter()
        .position(|row| row.contains(&(set_index as u16)))
        .map(|k| k as u32 + 1)
}
