pub mod corpus;
pub mod roundtrip;
pub mod stub;
