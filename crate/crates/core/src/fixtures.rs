//! The cars-mini warehouse: a small car-advertisement star (Sales fact with
//! Car, Owner and Advertisement dimensions) used by tests, the acceptance
//! suite and the CLI's golden files.

use crate::preference::{parse_preference, Preference};
use crate::star_store::{load_schema, Dataset};

pub const CARS_MINI_SCHEMA: &str = include_str!("../fixtures/cars-mini/schema.json");
pub const CARS_MINI_CAR: &str = include_str!("../fixtures/cars-mini/Car.csv");
pub const CARS_MINI_OWNER: &str = include_str!("../fixtures/cars-mini/Owner.csv");
pub const CARS_MINI_ADVERTISEMENT: &str = include_str!("../fixtures/cars-mini/Advertisement.csv");
pub const CARS_MINI_SALES: &str = include_str!("../fixtures/cars-mini/Sales.csv");
pub const CARS_MINI_PROFILE: &str = include_str!("../fixtures/cars-mini/profile.json");

/// Preferences of the car buyer who wants a recent, affordable, black car
/// advertised in Rhone-Alpes, with no requirement on the owner.
pub const CAR_BUYER_PREFERENCES: [&str; 4] = [
    "Car.year > 2007",
    "Car.price < 20000",
    "Car.color = 'black'",
    "Advertisement.region = 'Rhone-Alpes'",
];

/// Broad query: every car, cut down only by the user's hard preferences.
pub const WIDE_QUERY: &str = "Select * From Car";
/// Narrower query whose predicate acts as a soft preference.
pub const NARROW_QUERY: &str = "select * from car where model='BMW'";

pub fn cars_mini() -> Dataset {
    let mut ds = load_schema(CARS_MINI_SCHEMA).expect("cars-mini schema");
    ds.ingest_dimension("Car", CARS_MINI_CAR).expect("Car.csv");
    ds.ingest_dimension("Owner", CARS_MINI_OWNER).expect("Owner.csv");
    ds.ingest_dimension("Advertisement", CARS_MINI_ADVERTISEMENT)
        .expect("Advertisement.csv");
    ds.ingest_fact(CARS_MINI_SALES).expect("Sales.csv");
    ds
}

pub fn car_buyer_preferences() -> Vec<Preference> {
    CAR_BUYER_PREFERENCES
        .iter()
        .map(|s| parse_preference(s).expect("fixture preference"))
        .collect()
}
