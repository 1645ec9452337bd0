//! Frozen output of `examples/rock4_design.rs`: for `s = 5..=152`, the design
//! length `ell` and the attained stability interval `beta`.

#[allow(clippy::excessive_precision)]
pub(super) const TABLE: [(f64, f64); 148] = [
    (5.993389844894405, 6.011669683921332), // 5
    (9.852839469909664, 9.871067222928998), // 6
    (14.409931678771967, 14.428664589954371), // 7
    (19.67125671386718, 19.689944407745354), // 8
    (25.637145481109613, 25.656373340220444), // 9
    (32.307173728942864, 32.326558033180234), // 10
    (39.68092654228211, 39.700767005553246), // 11
    (47.75809844970701, 47.777201689086894), // 12
    (56.5384728050232, 56.55826127050496), // 13
    (66.02189613342284, 66.04170270226287), // 14
    (76.20826148986815, 76.22731355524061), // 15
    (87.09749267578121, 87.11491217431637), // 16
    (98.68953008651731, 98.70926799253462), // 17
    (110.98433406829832, 111.00098171840857), // 18
    (123.98187048912045, 124.00046776969381), // 19
    (137.68212127685544, 137.69588948898314), // 20
    (152.08506031036373, 152.10026881639476), // 21
    (167.19067821502682, 167.20739728284832), // 22
    (182.9989598846435, 183.01725978063197), // 23
    (199.5098950195312, 199.52984600903315), // 24
    (216.723483800888, 216.73431997507805), // 25
    (234.63970985412593, 234.65144183961866), // 26
    (253.25857503890984, 253.27123796766176), // 27
    (272.580077972412, 272.5937069763106), // 28
    (292.60420733451826, 292.618837544885), // 29
    (313.33096218109125, 313.3466287292003), // 30
    (334.7603453445434, 334.77708336181064), // 31
    (356.8923535156249, 356.91019813330064), // 32
    (379.7269769668579, 379.74596331570626), // 33
    (403.2642194747924, 403.28438268576616), // 34
    (427.50408363342274, 427.50408363342274), // 35
    (452.4465632629393, 452.4465632629394), // 36
    (478.09165757179244, 478.09165757179244), // 37
    (504.43937236785877, 504.43937236785877), // 38
    (531.4896855354309, 531.4896855354309), // 39
    (559.2426300048826, 559.2426300048826), // 40
    (587.6981847858427, 587.6981847858427), // 41
    (616.8563539123534, 616.8563539123534), // 42
    (646.7171167278287, 646.7171167278287), // 43
    (677.2805139160155, 677.2805139160155), // 44
    (708.5465104579926, 708.5465104579926), // 45
    (740.515123977661, 740.515123977661), // 46
    (773.1863399982452, 773.1863399982452), // 47
    (806.5601806640623, 806.5601806640623), // 48
    (840.6366336631772, 840.6366336631773), // 49
    (875.4156827926635, 875.4156827926633), // 50
    (910.8973486518857, 910.8973486518857), // 51
    (947.0816113281248, 947.0816113281248), // 52
    (983.9685022926328, 983.9685022926328), // 53
    (1021.5579971694946, 1021.5579971694947), // 54
    (1059.8500854969022, 1059.8500854969022), // 55
    (1098.8447985839841, 1098.8447985839841), // 56
    (1138.542119607925, 1138.542119607925), // 57
    (1178.9420664596555, 1178.9420664596555), // 58
    (1220.044594631195, 1220.044594631195), // 59
    (1261.849754333496, 1261.849754333496), // 60
    (1304.3574910259244, 1304.3574910259244), // 61
    (1347.5678808593746, 1347.5678808593746), // 62
    (1391.4808472728726, 1391.4808472728726), // 63
    (1436.0964453124998, 1436.0964453124998), // 64
    (1481.4146394729614, 1481.4146394729614), // 65
    (1527.4354113006593, 1527.4354113006593), // 66
    (1574.158846158981, 1574.158846158981), // 67
    (1621.5848385620116, 1621.5848385620116), // 68
    (1669.7134696769715, 1669.7134696769715), // 69
    (1718.5447072982788, 1718.5447072982788), // 70
    (1768.0785793113705, 1768.0785793113705), // 71
    (1818.3150329589837, 1818.3150329589837), // 72
    (1869.2540744304652, 1869.2540744304654), // 73
    (1920.895776443481, 1920.895776443481), // 74
    (1973.2400178909297, 1973.2400178909297), // 75
    (2026.2868966674803, 2026.28689666748), // 76
    (2080.036419782639, 2080.036419782639), // 77
    (2134.488489532471, 2134.488489532471), // 78
    (2189.643246212005, 2189.643246212005), // 79
    (2245.500549316406, 2245.500549316406), // 80
    (2302.0605032444, 2302.0605032444), // 81
    (2359.3230395126343, 2359.3230395126343), // 82
    (2417.28815670967, 2417.28815670967), // 83
    (2475.9559286499016, 2475.9559286499016), // 84
    (2535.32623720169, 2535.32623720169), // 85
    (2595.399242134094, 2595.399242134094), // 86
    (2656.1748366451257, 2656.1748366451257), // 87
    (2717.6529840087887, 2717.6529840087887), // 88
    (2779.8338015556337, 2779.8338015556337), // 89
    (2842.717191696167, 2842.717191696167), // 90
    (2906.30321146965, 2906.30321146965), // 91
    (2970.591847839355, 2970.591847839355), // 92
    (3035.583009252548, 3035.583009252548), // 93
    (3101.276853981017, 3101.276853981017), // 94
    (3167.673300743103, 3167.673300743103), // 95
    (3234.7723535156247, 3234.7723535156247), // 96
    (3302.57402100563, 3302.57402100563), // 97
    (3371.078316841125, 3371.078316841125), // 98
    (3440.28516629219, 3440.28516629219), // 99
    (3510.1946830749507, 3510.1946830749503), // 100
    (3580.806702098846, 3580.8067020988456), // 101
    (3652.1214453506464, 3652.1214453506464), // 102
    (3724.1387514019007, 3724.1387514019007), // 103
    (3796.8586553955074, 3796.858655395507), // 104
    (3870.2811985015865, 3870.281198501586), // 105
    (3944.4063209533683, 3944.4063209533683), // 106
    (4019.2340704536437, 4019.2340704536437), // 107
    (4094.7643899536133, 4094.7643899536133), // 108
    (4170.997334108353, 4170.997334108353), // 109
    (4247.932964324951, 4247.932964324951), // 110
    (4325.571113948822, 4325.571113948822), // 111
    (4403.9118457031245, 4403.9118457031245), // 112
    (4482.955229406357, 4482.955229406357), // 113
    (4562.701218223571, 4562.701218223571), // 114
    (4643.149890184402, 4643.149890184402), // 115
    (4724.30107421875, 4724.30107421875), // 116
    (4806.154850320816, 4806.154850320816), // 117
    (4888.711306190491, 4888.711306190491), // 118
    (4971.970402374268, 4971.970402374268), // 119
    (5055.93196105957, 5055.93196105957), // 120
    (5140.596213092804, 5140.596213092804), // 121
    (5225.963122825622, 5225.963122825622), // 122
    (5312.032509412765, 5312.032509412765), // 123
    (5398.804621582031, 5398.804621582031), // 124
    (5486.279278993607, 5486.279278993607), // 125
    (5574.45659374237, 5574.45659374237), // 126
    (5663.336532840728, 5663.336532840728), // 127
    (5752.919062499999, 5752.919062499999), // 128
    (5843.204148130417, 5843.204148130417), // 129
    (5934.191915512083, 5934.191915512083), // 130
    (6025.882172260283, 6025.882172260283), // 131
    (6118.275047607421, 6118.275047607421), // 132
    (6211.370680093763, 6211.370680093763), // 133
    (6305.168875274657, 6305.168875274657), // 134
    (6399.669601678847, 6399.669601678847), // 135
    (6494.873003540037, 6494.873003540037), // 136
    (6590.778876829147, 6590.778876829147), // 137
    (6687.387551307676, 6687.387551307676), // 138
    (6784.698640146253, 6784.698640146253), // 139
    (6882.712482452392, 6882.712482452391), // 140
    (6981.428869285581, 6981.428869285581), // 141
    (7080.847965049743, 7080.847965049744), // 142
    (7180.969554414747, 7180.969554414748), // 143
    (7281.793806152342, 7281.793806152342), // 144
    (7383.320698976515, 7383.320698976515), // 145
    (7485.550007858275, 7485.5500078582745), // 146
    (7588.482114372253, 7588.482114372254), // 147
    (7692.11679534912, 7692.116795349121), // 148
    (7796.454027671814, 7796.454027671814), // 149
    (7901.494002342225, 7901.494002342226), // 150
    (8007.236486492158, 8007.236486492158), // 151
    (8113.681455688477, 8113.681455688478), // 152
];
