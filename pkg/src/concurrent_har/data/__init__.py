from .composite import CompositeSet, label_vector, make_composites, tile
from .ingest import (
    AudioClip,
    DepthRecording,
    ImageSet,
    ingest,
    load_cifar100,
    load_mnist,
    read_cifar100,
    read_depth_raw,
    read_idx,
    read_idx_images,
    read_idx_labels,
    read_rfid_log,
    read_wav,
    write_cifar100,
    write_depth_raw,
    write_idx,
    write_rfid_log,
    write_wav,
)
from .synth import (
    Event,
    SyntheticCaseSpec,
    events_to_bits,
    merge_events,
    sample_events,
    synth_case,
    synth_cases,
    synth_events_and_case,
    trauma_like,
)
