//! Every example must run to completion.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));

            #[test]
            fn runs() {
                main().unwrap();
            }
        }
    };
}

example!(prune_layer);
example!(fixed_mask_updaters);
example!(structured_2_4);
example!(gradual_schedule);
example!(chain_pruning);
example!(tensor_io);
example!(bench_sweep);
